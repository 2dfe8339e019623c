//! Independent oracles: series, root finding and ODE shooting, sharing no
//! code with the library.

#![allow(dead_code)]

/// Bisection for a sign change of `g` on `[a, b]`.
pub fn bisect(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut ga = g(a);
    assert!(ga * g(b) < 0.0, "no sign change on [{a}, {b}]");
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let gm = g(m);
        if gm == 0.0 || b - a < 1e-15 * m.abs() {
            return m;
        }
        if gm * ga < 0.0 {
            b = m;
        } else {
            a = m;
            ga = gm;
        }
    }
    0.5 * (a + b)
}

/// `J₀(x) = Σ (-1)^k (x/2)^{2k} / (k!)²`.
pub fn bessel_j0(x: f64) -> f64 {
    let q = -(x * x) / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        term *= q / (k as f64 * k as f64);
        sum += term;
    }
    sum
}

/// First positive zero of `J₀`.
pub fn j0_first_zero() -> f64 {
    bisect(bessel_j0, 2.0, 3.0)
}

/// `π` as the zero of `sin` in `[3, 3.5]`.
pub fn pi_from_sine() -> f64 {
    bisect(f64::sin, 3.0, 3.5)
}

/// Closed-form singular profile `1 - r^{2/(p+1)}` and the parameter at
/// which it solves the radial problem with `f = (1-u)^{-p}`:
/// `-Δ(1 - r^a) = a(n - 2 + a) r^{a-2}` and `r^{a-2} = (r^a)^{-p}` when `a(p+1) = 2`.
pub fn singular_profile(n: usize, p: f64) -> (f64, impl Fn(f64) -> f64) {
    let a = 2.0 / (p + 1.0);
    (a * (n as f64 - 2.0 + a), move |r: f64| 1.0 - r.powf(a))
}

/// RK4 shooting for `w'' + (n-1) w'/r = -(1-w)^{-p}`, `w(0) = α`, `w'(0) = 0`,
/// up to the first zero `R(α)`; by scaling, `u(r) = w(R r)` solves the
/// unit-ball problem with `λ = R²`. Returns `None` if `w` reaches 1.
pub fn shoot_lambda(n: usize, p: f64, alpha: f64) -> Option<f64> {
    let f = |w: f64| (1.0 - w).powf(-p);
    let nn = n as f64;
    let r0 = 1e-4;
    let mut r = r0;
    let mut w = alpha - f(alpha) * r0 * r0 / (2.0 * nn);
    let mut dw = -f(alpha) * r0 / nn;
    let rhs = |r: f64, w: f64, dw: f64| -> Option<(f64, f64)> {
        if w >= 1.0 {
            return None;
        }
        Some((dw, -(nn - 1.0) * dw / r - f(w)))
    };
    let h = 1e-4;
    while w > 0.0 {
        let (k1w, k1d) = rhs(r, w, dw)?;
        let (k2w, k2d) = rhs(r + h / 2.0, w + h / 2.0 * k1w, dw + h / 2.0 * k1d)?;
        let (k3w, k3d) = rhs(r + h / 2.0, w + h / 2.0 * k2w, dw + h / 2.0 * k2d)?;
        let (k4w, k4d) = rhs(r + h, w + h * k3w, dw + h * k3d)?;
        let w_new = w + h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        let dw_new = dw + h / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
        if w_new <= 0.0 {
            let root = r + h * w / (w - w_new);
            return Some(root * root);
        }
        r += h;
        w = w_new;
        dw = dw_new;
        if r > 100.0 {
            return None;
        }
    }
    None
}

/// `max_α λ(α)` by golden-section search on `[lo, hi]`.
pub fn shooting_lambda_star(n: usize, p: f64, lo: f64, hi: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let g = |x: f64| shoot_lambda(n, p, x).unwrap_or(0.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut gc, mut gd) = (g(c), g(d));
    for _ in 0..60 {
        if gc > gd {
            b = d;
            d = c;
            gd = gc;
            c = b - phi * (b - a);
            gc = g(c);
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + phi * (b - a);
            gd = g(d);
        }
    }
    gc.max(gd)
}

pub fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
