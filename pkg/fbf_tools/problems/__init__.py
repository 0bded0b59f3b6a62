from .affine import make_skew_affine, make_strongly_monotone_affine
from .base import Benchmark
from .bilinear import make_bilinear_saddle
from .lasso import make_lasso

REGISTRY: dict = {
    "affine": make_strongly_monotone_affine,
    "skew": make_skew_affine,
    "lasso": make_lasso,
    "bilinear": make_bilinear_saddle,
}
