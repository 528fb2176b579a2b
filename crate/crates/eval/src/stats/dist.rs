//! Distribution tails. Backed by `statrs`, whose incomplete gamma and beta
//! functions use series and continued-fraction expansions.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal, StudentsT};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// P(Z ≥ z).
pub fn normal_sf(z: f64) -> f64 {
    std_normal().sf(z)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Two-sided normal p-value for |z|.
pub fn normal_two_sided(z: f64) -> f64 {
    (2.0 * normal_sf(z.abs())).min(1.0)
}

/// P(X ≥ x) for chi-square with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df).expect("positive df").sf(x)
}

/// Two-sided Student t p-value.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    (2.0 * StudentsT::new(0.0, 1.0, df).expect("positive df").sf(t.abs())).min(1.0)
}

/// P(F ≥ f).
pub fn f_sf(f: f64, df1: f64, df2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    FisherSnedecor::new(df1, df2).expect("positive df").sf(f)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Critical values from standard printed tables.
    #[test]
    fn matches_table_values() {
        assert!((normal_sf(1.959963984540054) - 0.025).abs() < 1e-10);
        assert!((normal_sf(1.6448536269514722) - 0.05).abs() < 1e-10);
        assert!((chi2_sf(3.841458820694124, 1.0) - 0.05).abs() < 1e-10);
        assert!((chi2_sf(5.991464547107979, 2.0) - 0.05).abs() < 1e-10);
        assert!((chi2_sf(11.070497693516351, 5.0) - 0.05).abs() < 1e-10);
        assert!((t_two_sided(2.2281388519649385, 10.0) - 0.05).abs() < 1e-9);
        assert!((f_sf(4.964602743730711, 1.0, 10.0) - 0.05).abs() < 1e-9);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
    }
}
