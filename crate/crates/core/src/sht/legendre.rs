//! Normalized associated Legendre functions and Clenshaw-Curtis weights.

/// Fully normalized associated Legendre values at `x = cos(colatitude)`,
/// with the Condon-Shortley phase folded in, such that
/// `Y_lm = table[l][m] * exp(i m phi)` is orthonormal over the sphere.
///
/// Returns a flat table indexed `l * (m_max + 1) + m`, zero for `m > l`.
/// Uses the standard stable three-term recurrence with on-the-fly
/// normalization, so no overflow occurs at high degree.
pub fn normalized_assoc_legendre(l_max: usize, m_max: usize, x: f64) -> Vec<f64> {
    let l1 = l_max + 1;
    let m1 = m_max + 1;
    let mut t = vec![0.0; l1 * m1];
    let sin_theta = (1.0 - x * x).max(0.0).sqrt();
    let p00 = (1.0 / (4.0 * std::f64::consts::PI)).sqrt();

    // Diagonal: P_m^m, then one step up, then the l-recurrence.
    let mut pmm = p00;
    for m in 0..=m_max.min(l_max) {
        if m > 0 {
            pmm *= -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * sin_theta;
        }
        t[m * m1 + m] = pmm;
        if m + 1 <= l_max {
            let pm1 = ((2 * m + 3) as f64).sqrt() * x * pmm;
            t[(m + 1) * m1 + m] = pm1;
            let mut prev = pmm;
            let mut curr = pm1;
            for l in (m + 2)..=l_max {
                let lf = l as f64;
                let mf = m as f64;
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((2.0 * lf + 1.0) * (lf - 1.0 + mf) * (lf - 1.0 - mf))
                    / ((2.0 * lf - 3.0) * (lf * lf - mf * mf)))
                    .sqrt();
                let next = a * x * curr - b * prev;
                t[l * m1 + m] = next;
                prev = curr;
                curr = next;
            }
        }
    }
    t
}

/// Clenshaw-Curtis quadrature weights for the equiangular nodes
/// `theta_j = j*pi/(n-1)`, `x_j = cos(theta_j)`, integrating over
/// `x in [-1, 1]`. Nonnegative, summing to 2; the endpoint (pole) rows
/// carry near-zero weight.
pub fn clenshaw_curtis_weights(n: usize) -> Vec<f64> {
    assert!(n >= 2, "need at least two latitude nodes");
    let nn = n - 1;
    let mut w = vec![0.0; n];
    let endpoint = if nn % 2 == 0 {
        1.0 / ((nn * nn - 1) as f64)
    } else {
        1.0 / ((nn * nn) as f64)
    };
    w[0] = endpoint;
    w[nn] = endpoint;
    for (j, wj) in w.iter_mut().enumerate().take(nn).skip(1) {
        let theta = j as f64 * std::f64::consts::PI / nn as f64;
        let mut s = 0.0;
        let k_top = nn / 2;
        for k in 0..=k_top {
            let term = (2.0 * k as f64 * theta).cos() / (1.0 - 4.0 * (k * k) as f64);
            let coeff = if k == 0 || (nn % 2 == 0 && k == k_top) {
                0.5
            } else {
                1.0
            };
            s += coeff * term;
        }
        *wj = 4.0 / nn as f64 * s;
    }
    w
}
