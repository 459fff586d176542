//! Lag polynomials. A polynomial is stored by coefficient, `c[k]` being the
//! coefficient of `B^k`; `c[0]` is always 1 for the operators used here.

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `1 + sign * sum_i coefs[i] B^{lag (i+1)}`.
pub fn lagged(coefs: &[f64], lag: usize, sign: f64) -> Vec<f64> {
    let mut out = vec![0.0; coefs.len() * lag + 1];
    out[0] = 1.0;
    for (i, c) in coefs.iter().enumerate() {
        out[(i + 1) * lag] = sign * c;
    }
    out
}

/// `(1-B)^d (1-B^s)^D`.
pub fn differencing(d: usize, seasonal_d: usize, period: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..d {
        out = mul(&out, &[1.0, -1.0]);
    }
    let mut seasonal = vec![0.0; period + 1];
    seasonal[0] = 1.0;
    seasonal[period] = -1.0;
    for _ in 0..seasonal_d {
        out = mul(&out, &seasonal);
    }
    out
}

/// MA(infinity) weights of `ma(B) / ar(B)` up to `n` terms (`psi[0] = 1`).
pub fn psi_weights(ar: &[f64], ma: &[f64], n: usize) -> Vec<f64> {
    let mut psi = Vec::with_capacity(n);
    for j in 0..n {
        let mut v = ma.get(j).copied().unwrap_or(0.0);
        for k in 1..=j.min(ar.len().saturating_sub(1)) {
            v -= ar[k] * psi[j - k];
        }
        psi.push(v);
    }
    psi
}

/// Nonzero `(lag, coefficient)` pairs for `k >= 1`.
pub fn sparse_tail(p: &[f64]) -> Vec<(usize, f64)> {
    p.iter()
        .enumerate()
        .skip(1)
        .filter(|(_, c)| **c != 0.0)
        .map(|(k, c)| (k, *c))
        .collect()
}

/// How far the factor `1 - a_1 z - ... - a_m z^m` (m <= 2) is from having
/// all roots strictly outside the unit circle. `None` when it does;
/// otherwise a nonnegative violation size.
pub fn stationarity_violation(a: &[f64]) -> Option<f64> {
    match a {
        [] => None,
        [a1] => (a1.abs() >= 1.0).then(|| a1.abs() - 1.0),
        [a1, a2] => {
            // stationarity triangle
            let v = [a1 + a2 - 1.0, a2 - a1 - 1.0, a2.abs() - 1.0]
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max);
            (v >= 0.0).then_some(v)
        }
        _ => {
            // not used: every factor here has degree <= 2
            let bound: f64 = a.iter().map(|x| x.abs()).sum();
            (bound >= 1.0).then_some(bound - 1.0)
        }
    }
}
