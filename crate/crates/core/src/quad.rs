//! Adaptive quadrature for the handful of reference integrals the suite
//! needs (exponential-law moments, conditional-expectation kernels).

/// Adaptive Simpson integration of `f` on `[a, b]` to absolute tolerance `tol`.
///
/// `f` must be finite on `[a, b]`; singular endpoints are handled by the
/// callers via substitution (see [`sqrt_pi_integral`]).
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    simpson_step(&f, a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, 50)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// `int_0^inf exp(-u) / sqrt(u) du`, computed as `2 int_0^inf exp(-v^2) dv`
/// via `u = v^2` to remove the endpoint singularity. Equals `sqrt(pi)`.
pub fn sqrt_pi_integral(tol: f64) -> f64 {
    // exp(-v^2) < 1e-70 beyond v = 13; the tail is negligible at any
    // tolerance this suite uses.
    2.0 * integrate(|v| (-v * v).exp(), 0.0, 13.0, tol)
}

/// `int_eps^t exp(-u) / u du` for `0 < eps < t`. Diverges as `eps -> 0`,
/// which is exactly what the divergence probe measures.
pub fn truncated_reciprocal_exp_integral(eps: f64, t: f64, tol: f64) -> f64 {
    assert!(eps > 0.0 && t > eps, "requires 0 < eps < t");
    integrate(|u| (-u).exp() / u, eps, t, tol)
}

/// Conditional-expectation kernel of a single-jump filtration with
/// exponential jump law: `h(t) = exp(rate*t) int_t^inf g(u) rate exp(-rate*u) du`,
/// i.e. `E[g(tau) | tau > t]`. `g` must vanish outside `[0, support_end]`
/// (pass `f64::INFINITY` for full support; the integral is then truncated
/// where the exponential weight is below 1e-300).
pub fn exp_conditional_tail<F: Fn(f64) -> f64>(
    g: F,
    rate: f64,
    t: f64,
    support_end: f64,
    tol: f64,
) -> f64 {
    let upper = if support_end.is_finite() {
        support_end
    } else {
        t + 690.0 / rate
    };
    if upper <= t {
        return 0.0;
    }
    // Integrate in shifted coordinates so the weight is exp(-rate*(u-t)),
    // avoiding overflow of exp(rate*t) for large t.
    integrate(
        |u| g(u) * rate * (-rate * (u - t)).exp(),
        t,
        upper,
        tol,
    )
}
