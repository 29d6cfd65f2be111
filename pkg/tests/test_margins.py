"""Margin shapes: endpoint formulas, slopes, ordering, and diagnostics."""

import pytest
from hypothesis import given, strategies as st

from seqest import (
    DomainError,
    absolute_shape,
    check_shape,
    custom_shape,
    kappa,
    margin_lower,
    margin_upper,
    mixed_shape,
    multiplicative_shape,
    relative_shape,
    report_margins,
    shape_from_config,
)

EPS_GRID = (1e-1, 1e-2, 1e-3, 1e-4)


def mixed_union_oracle(z, eps, rho, side):
    """Endpoint of {mu: |z-mu| < rho*eps or |z-mu| < eps*|mu|} by membership
    scan over a fine mu grid, refined by bisection at the crossing."""
    def member(mu):
        return abs(z - mu) < rho * eps or abs(z - mu) < eps * abs(mu)

    lo, hi = z - 1.0, z + 1.0
    grid = [lo + (hi - lo) * i / 20000 for i in range(20001)]
    inside = [mu for mu in grid if member(mu)]
    edge = min(inside) if side == "lower" else max(inside)
    # bisect between edge and its outside neighbor
    step = (hi - lo) / 20000
    a, b = (edge - step, edge) if side == "lower" else (edge, edge + step)
    for _ in range(60):
        mid = 0.5 * (a + b)
        if member(mid) == (side == "lower"):
            b = mid
        else:
            a = mid
    return 0.5 * (a + b)


class TestEndpointExamples:
    def test_absolute(self):
        sh = absolute_shape()
        assert margin_lower(sh, 0.3, 0.1) == pytest.approx(0.2)
        assert margin_upper(sh, 0.3, 0.1) == pytest.approx(0.4)

    def test_relative_roots(self):
        # lower/upper roots of |z - mu| = eps * mu
        sh = relative_shape()
        assert margin_lower(sh, 0.5, 0.1) == pytest.approx(0.5 / 1.1, abs=1e-12)
        assert margin_upper(sh, 0.5, 0.1) == pytest.approx(0.5 / 0.9, abs=1e-12)
        # solving the defining equation directly agrees
        lo = margin_lower(sh, 0.5, 0.1)
        hi = margin_upper(sh, 0.5, 0.1)
        assert abs(0.5 - lo) == pytest.approx(0.1 * lo, abs=1e-12)
        assert abs(0.5 - hi) == pytest.approx(0.1 * hi, abs=1e-12)

    def test_multiplicative(self):
        sh = multiplicative_shape()
        assert margin_lower(sh, 0.5, 0.1) == pytest.approx(0.45)
        assert margin_upper(sh, 0.5, 0.1) == pytest.approx(0.55)

    def test_mixed_union_against_membership_scan(self):
        sh = mixed_shape(0.2)
        got = margin_upper(sh, 0.05, 0.1)
        assert got == pytest.approx(max(0.07, 0.05 / 0.9))
        assert got == pytest.approx(
            mixed_union_oracle(0.05, 0.1, 0.2, "upper"), abs=1e-9
        )
        assert margin_lower(sh, 0.05, 0.1) == pytest.approx(
            mixed_union_oracle(0.05, 0.1, 0.2, "lower"), abs=1e-9
        )

    @pytest.mark.parametrize("z", [0.05, 0.3, 1.7, -0.4, 0.0])
    @pytest.mark.parametrize("eps", [0.3, 0.05])
    def test_mixed_matches_scan_widely(self, z, eps):
        sh = mixed_shape(0.2)
        assert margin_lower(sh, z, eps) == pytest.approx(
            mixed_union_oracle(z, eps, 0.2, "lower"), abs=1e-9
        )
        assert margin_upper(sh, z, eps) == pytest.approx(
            mixed_union_oracle(z, eps, 0.2, "upper"), abs=1e-9
        )


class TestKappa:
    def test_absolute_is_one(self):
        assert kappa(absolute_shape(), 0.5) == 1.0

    def test_multiplicative_is_mu(self):
        assert kappa(multiplicative_shape(), 0.5) == 0.5

    def test_mixed_numeric_limit(self):
        # numeric limit of (U(z, eps) - z) / eps along z -> mu, eps -> 0
        sh = mixed_shape(0.2)
        mu = 0.05
        slopes = []
        for k in range(2, 7):
            eps = 10.0**-k
            z = mu + 0.3 * eps
            slopes.append((margin_upper(sh, z, eps) - z) / eps)
        assert slopes[-1] == pytest.approx(max(0.2, mu), abs=1e-4)
        assert kappa(sh, mu) == pytest.approx(0.2)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            kappa(relative_shape(), -1.0)


class TestErrors:
    def test_relative_nonpositive_z(self):
        sh = relative_shape()
        with pytest.raises(DomainError):
            margin_lower(sh, 0.0, 0.1)
        with pytest.raises(DomainError):
            margin_upper(sh, -0.5, 0.1)

    def test_multiplicative_nonpositive_z(self):
        with pytest.raises(DomainError):
            margin_upper(multiplicative_shape(), -1.0, 0.1)

    @pytest.mark.parametrize("factory", [relative_shape, multiplicative_shape,
                                         lambda: mixed_shape(0.3)])
    def test_eps_at_least_one_rejected(self, factory):
        with pytest.raises(DomainError):
            margin_upper(factory(), 0.5, 1.0)

    def test_nonpositive_eps_rejected(self):
        with pytest.raises(DomainError):
            margin_lower(absolute_shape(), 0.5, 0.0)


SHAPES = {
    "absolute": (absolute_shape(), (-5.0, 5.0)),
    "relative": (relative_shape(), (1e-3, 5.0)),
    "mixed": (mixed_shape(0.2), (-5.0, 5.0)),
    "multiplicative": (multiplicative_shape(), (1e-3, 5.0)),
}


@pytest.mark.parametrize("name", sorted(SHAPES))
@given(u=st.floats(0.0, 1.0), eps=st.floats(1e-6, 0.99))
def test_ordering_l_z_u(name, u, eps):
    shape, (zlo, zhi) = SHAPES[name]
    z = zlo + (zhi - zlo) * u
    assert margin_lower(shape, z, eps) <= z <= margin_upper(shape, z, eps)


@given(z=st.floats(-10, 10), eps=st.floats(1e-6, 0.99))
def test_absolute_symmetry(z, eps):
    sh = absolute_shape()
    assert margin_upper(sh, z, eps) - z == pytest.approx(
        z - margin_lower(sh, z, eps), rel=1e-12
    )


@pytest.mark.parametrize("name,mu", [
    ("absolute", 0.3), ("relative", 0.5), ("mixed", 0.05),
    ("multiplicative", 0.5),
])
def test_slope_convergence_linear_in_eps(name, mu):
    # |(U(mu, eps) - mu)/eps - kappa| <= c * eps with c bounded on the grid
    shape, _ = SHAPES[name]
    kap = kappa(shape, mu)
    ratios = []
    for eps in EPS_GRID:
        dev_hi = abs((margin_upper(shape, mu, eps) - mu) / eps - kap)
        dev_lo = abs((mu - margin_lower(shape, mu, eps)) / eps - kap)
        ratios.append(max(dev_hi, dev_lo) / eps)
    assert max(ratios) <= 10.0 * (kap + 1.0)


class TestCheckShape:
    def test_absolute_all_zero_devs(self):
        rep = check_shape(absolute_shape(), 0.3, (0.1, 0.01, 0.001))
        assert not rep.flagged
        assert max(rep.slope_devs) <= 1e-12  # zero up to division roundoff
        assert rep.max_order_violation == 0.0

    def test_relative_devs_decrease(self):
        rep = check_shape(relative_shape(), 0.5, (0.1, 0.01, 0.001))
        assert not rep.flagged
        assert list(rep.slope_devs) == sorted(rep.slope_devs, reverse=True)
        assert rep.slope_devs[-1] < rep.slope_devs[0]

    def test_strictness_violation_flagged(self):
        bad = custom_shape(lambda z, e: z - e, lambda z, e: z, lambda mu: 1.0)
        rep = check_shape(bad, 0.3, (0.1, 0.01))
        assert rep.flagged
        assert rep.min_strict_margin <= 0.0

    def test_grid_validation(self):
        with pytest.raises(DomainError):
            check_shape(absolute_shape(), 0.3, ())
        with pytest.raises(DomainError):
            check_shape(absolute_shape(), 0.3, (0.01, 0.1))


class TestConfigAndReporting:
    def test_shape_from_config(self):
        assert shape_from_config("absolute").kind == "absolute"
        assert shape_from_config("mixed", rho=0.2).params["rho"] == 0.2
        with pytest.raises(DomainError):
            shape_from_config("mixed")
        with pytest.raises(DomainError):
            shape_from_config("nope")

    def test_default_reporting_equals_stopping(self):
        sh = absolute_shape()
        lo, hi = report_margins(sh, 0.3, 0.1)
        assert (lo, hi) == (margin_lower(sh, 0.3, 0.1),
                            margin_upper(sh, 0.3, 0.1))

    def test_custom_reporting_pair(self):
        sh = custom_shape(
            lambda z, e: z - e, lambda z, e: z + e, lambda mu: 1.0,
            report_lower_fn=lambda z, e: z - 0.5 * e,
            report_upper_fn=lambda z, e: z + 0.5 * e,
        )
        lo, hi = report_margins(sh, 0.3, 0.1)
        assert (lo, hi) == pytest.approx((0.25, 0.35))
        assert margin_upper(sh, 0.3, 0.1) == pytest.approx(0.4)
