//! Shared numerical kernels: root bracketing and bisection, linear solves,
//! and exact-ish torus arithmetic. Everything here is deterministic — same
//! inputs, bit-identical outputs — which the batch layer relies on.

/// Default bisection width for scalar root solves.
pub const ROOT_XTOL: f64 = 1e-12;

/// Bisect a bracketed root of `f` to absolute width `xtol`.
///
/// `f(lo)` and `f(hi)` must have opposite signs (or one of them is an exact
/// zero, which is returned directly).
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, xtol: f64) -> f64 {
    let mut flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    let fhi = f(hi);
    if fhi == 0.0 {
        return hi;
    }
    debug_assert!(flo * fhi < 0.0, "bisect called without a sign change");
    while hi - lo > xtol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval no longer splittable in f64
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if flo * fm < 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    0.5 * (lo + hi)
}

/// All roots of `f` on `[lo, hi]` found by sign-change bracketing on an
/// `n`-cell grid followed by bisection. Roots landing exactly on grid nodes
/// are kept once; genuinely distinct roots are never merged, so callers can
/// detect under-resolution from root spacing.
pub fn bracketed_roots<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize, xtol: f64) -> Vec<f64> {
    assert!(n >= 2 && hi > lo);
    let h = (hi - lo) / n as f64;
    let mut vals = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x = if i == n { hi } else { lo + i as f64 * h };
        vals.push((x, f(x)));
    }
    let mut roots: Vec<f64> = Vec::new();
    let push = |r: f64, roots: &mut Vec<f64>| {
        if roots.last().is_none_or(|&p| r - p > 4.0 * xtol) {
            roots.push(r);
        }
    };
    for i in 0..n {
        let (xa, fa) = vals[i];
        let (xb, fb) = vals[i + 1];
        if fa == 0.0 {
            push(xa, &mut roots);
        }
        if fa * fb < 0.0 {
            push(bisect(&f, xa, xb, xtol), &mut roots);
        }
    }
    if let Some(&(xn, fnl)) = vals.last() {
        if fnl == 0.0 {
            push(xn, &mut roots);
        }
    }
    roots
}

/// Fractional part of `k * w` on the unit circle, computed with a split
/// product so that it stays accurate to a few ulps for |k| up to 2^26.
/// Plain `(k as f64 * w).fract()` loses ~|k|·eps of absolute accuracy.
pub fn fract_mul(k: i64, w: f64) -> f64 {
    if k.unsigned_abs() > (1 << 26) {
        return (k as f64 * w).rem_euclid(1.0);
    }
    // Veltkamp split of w into 26 high bits + low remainder.
    let split = ((1u64 << 27) + 1) as f64;
    let c = split * w;
    let hi = c - (c - w);
    let lo = w - hi;
    let kf = k as f64;
    let p_hi = kf * hi; // exact: 26 bits * 26 bits
    let p_lo = kf * lo;
    let frac = p_hi.fract() + p_lo;
    frac.rem_euclid(1.0)
}

/// Reduce to the fundamental domain [0, 1).
pub fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Solve a tridiagonal system with partial pivoting (banded LU with one
/// fill-in superdiagonal). `sub[i]` couples row i to i-1 (sub[0] ignored),
/// `sup[i]` couples row i to i+1 (sup[n-1] ignored). Returns `None` when a
/// pivot vanishes.
pub fn tridiag_solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    assert!(sub.len() == n && sup.len() == n && rhs.len() == n);
    if n == 0 {
        return Some(Vec::new());
    }
    // Row-local copies: d = diagonal, u1 = first super, u2 = fill-in super.
    let mut d = diag.to_vec();
    let mut u1 = sup.to_vec();
    let mut u2 = vec![0.0; n];
    let mut b = rhs.to_vec();
    let mut l = vec![0.0; n]; // pivoted multipliers, for the forward sweep

    for i in 0..n - 1 {
        let a_lower = sub[i + 1];
        if a_lower.abs() > d[i].abs() {
            // swap rows i and i+1
            let (di, u1i, u2i, bi) = (d[i], u1[i], u2[i], b[i]);
            d[i] = a_lower;
            u1[i] = d[i + 1];
            u2[i] = u1[i + 1];
            b[i] = b[i + 1];
            d[i + 1] = u1i;
            u1[i + 1] = u2i;
            b[i + 1] = bi;
            // the eliminated entry is the old diagonal
            l[i + 1] = di / d[i];
        } else {
            if d[i] == 0.0 {
                return None;
            }
            l[i + 1] = a_lower / d[i];
        }
        let m = l[i + 1];
        d[i + 1] -= m * u1[i];
        if i + 2 < n {
            u1[i + 1] -= m * u2[i];
        }
        b[i + 1] -= m * b[i];
    }
    if d[n - 1] == 0.0 {
        return None;
    }

    let mut x = vec![0.0; n];
    x[n - 1] = b[n - 1] / d[n - 1];
    if n >= 2 {
        x[n - 2] = (b[n - 2] - u1[n - 2] * x[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (b[i] - u1[i] * x[i + 1] - u2[i] * x[i + 2]) / d[i];
    }
    Some(x)
}

/// In-place dense LU solve with partial pivoting. `a` is row-major n×n and
/// is destroyed; `b` is overwritten with the solution. Returns `false` when
/// the matrix is numerically singular.
pub fn dense_lu_solve(a: &mut [f64], n: usize, b: &mut [f64]) -> bool {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    for col in 0..n {
        // pivot search
        let mut piv = col;
        let mut best = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                piv = row;
            }
        }
        if best == 0.0 {
            return false;
        }
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let inv = 1.0 / a[col * n + col];
        for row in col + 1..n {
            let m = a[row * n + col] * inv;
            if m == 0.0 {
                continue;
            }
            a[row * n + col] = 0.0;
            for j in col + 1..n {
                a[row * n + j] -= m * a[col * n + j];
            }
            b[row] -= m * b[col];
        }
    }
    for row in (0..n).rev() {
        let mut s = b[row];
        for j in row + 1..n {
            s -= a[row * n + j] * b[j];
        }
        b[row] = s / a[row * n + row];
    }
    true
}

/// Least-squares slope and intercept of y against x.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut res = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let e = y - (slope * x + intercept);
        res += e * e;
    }
    (slope, intercept, res.sqrt())
}
