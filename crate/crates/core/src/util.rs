/// `x^p` with exact fast paths for the exponents the common cases hit
/// (α = 2, 3 give ρ^{α−1} and ρ^α with integer powers).
#[inline]
pub(crate) fn pow(x: f64, p: f64) -> f64 {
    if p == 1.0 {
        x
    } else if p == 2.0 {
        x * x
    } else if p == 3.0 {
        x * x * x
    } else if p == 0.5 {
        x.sqrt()
    } else {
        x.powf(p)
    }
}

#[cfg(test)]
mod tests {
    use super::pow;

    #[test]
    fn fast_paths_agree_with_powf() {
        for x in [0.0, 0.3, 1.0, 2.5, 17.0] {
            for p in [0.5, 1.0, 2.0, 3.0, 1.7] {
                assert!((pow(x, p) - f64::powf(x, p)).abs() <= 1e-15 * (1.0 + f64::powf(x, p)));
            }
        }
    }
}
