"""Hypothesis strategies for stable tandem parameters."""

from hypothesis import strategies as st

from tandemqbd.model import TandemParams


@st.composite
def stable_params(draw, lam_range=(0.2, 2.0), factor=(1.05, 4.0)):
    lam = draw(st.floats(*lam_range))
    mu1 = lam * draw(st.floats(*factor))
    mu2 = lam * draw(st.floats(*factor))
    return TandemParams(lam, mu1, mu2)


def unit_z(lo=0.01, hi=0.99):
    return st.floats(lo, hi)
