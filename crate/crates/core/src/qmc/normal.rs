//! Inverse standard-normal CDF, Wichura's AS 241 (PPND16). Relative accuracy
//! about 1e-16 over the open unit interval.

#[allow(clippy::excessive_precision)]
const A: [f64; 8] = [
    3.3871328727963666080E0,
    1.3314166789178437745E+2,
    1.9715909503065514427E+3,
    1.3731693765509461125E+4,
    4.5921953931549871457E+4,
    6.7265770927008700853E+4,
    3.3430575583588128105E+4,
    2.5090809287301226727E+3,
];
#[allow(clippy::excessive_precision)]
const B: [f64; 8] = [
    1.0,
    4.2313330701600911252E+1,
    6.8718700749205790830E+2,
    5.3941960214247511077E+3,
    2.1213794301586595867E+4,
    3.9307895800092710610E+4,
    2.8729085735721942674E+4,
    5.2264952788528545610E+3,
];
#[allow(clippy::excessive_precision)]
const C: [f64; 8] = [
    1.42343711074968357734E0,
    4.63033784615654529590E0,
    5.76949722146069140550E0,
    3.64784832476320460504E0,
    1.27045825245236838258E0,
    2.41780725177450611770E-1,
    2.27238449892691845833E-2,
    7.74545014278341407640E-4,
];
#[allow(clippy::excessive_precision)]
const D: [f64; 8] = [
    1.0,
    2.05319162663775882187E0,
    1.67638483018380384940E0,
    6.89767334985100004550E-1,
    1.48103976427480074590E-1,
    1.51986665636164571966E-2,
    5.47593808499534494600E-4,
    1.05075007164441684324E-9,
];
#[allow(clippy::excessive_precision)]
const E: [f64; 8] = [
    6.65790464350110377720E0,
    5.46378491116411436990E0,
    1.78482653991729133580E0,
    2.96560571828504891230E-1,
    2.65321895265761230930E-2,
    1.24266094738807843860E-3,
    2.71155556874348757815E-5,
    2.01033439929228813265E-7,
];
#[allow(clippy::excessive_precision)]
const F: [f64; 8] = [
    1.0,
    5.99832206555887937690E-1,
    1.36929880922735805310E-1,
    1.48753612908506148525E-2,
    7.86869131145613259100E-4,
    1.84631831751005468180E-5,
    1.42151175831644588870E-7,
    2.04426310338993978564E-15,
];

#[inline]
fn poly(c: &[f64; 8], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
}

/// `Phi^{-1}(p)` for `p` in `(0, 1)`; returns `-inf`/`inf` at the endpoints.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::erf::erfc;

    fn phi(x: f64) -> f64 {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }

    #[test]
    fn known_quantiles() {
        assert_eq!(inverse_normal_cdf(0.5), 0.0);
        assert!((inverse_normal_cdf(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((inverse_normal_cdf(0.841_344_746_068_542_9) - 1.0).abs() < 1e-12);
        assert!((inverse_normal_cdf(1e-10) + 6.361_340_902_404_056).abs() < 1e-9);
    }

    #[test]
    fn round_trips_through_the_cdf() {
        // A CDF mismatch dp corresponds to a quantile error dp / density.
        let mut p = 1e-12;
        while p < 1.0 - 1e-12 {
            let x = inverse_normal_cdf(p);
            let back = if p < 0.5 { phi(x) } else { 1.0 - phi(-x) };
            let density = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
            assert!(((back - p) / density).abs() < 1e-9, "p={p} x={x} back={back}");
            assert!(((back - p) / p).abs() < 1e-10, "p={p} x={x} back={back}");
            p = if p < 0.5 { p * 1.7 } else { 1.0 - (1.0 - p) / 1.7 };
            if (p - 0.5).abs() < 0.1 {
                p = 0.6;
            }
        }
    }

    #[test]
    fn symmetric() {
        for i in 1..1000 {
            let u = i as f64 / 1000.0;
            assert!((inverse_normal_cdf(u) + inverse_normal_cdf(1.0 - u)).abs() < 1e-12);
        }
    }
}
