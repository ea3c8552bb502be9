use super::FairshareError;

/// Jain's fairness index `(Σx)² / (n·Σx²)`, in `[1/n, 1]`.
pub fn jain_index(values: &[f64]) -> Result<f64, FairshareError> {
    if values.is_empty() {
        return Err(FairshareError::EmptyInput);
    }
    if values.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(FairshareError::InvalidValue);
    }
    let sum: f64 = values.iter().sum();
    if sum == 0.0 {
        return Err(FairshareError::AllZero);
    }
    let n = values.len() as f64;
    // boundary cases exactly, without rounding in the ratio
    if values.iter().all(|&x| x == values[0]) {
        return Ok(1.0);
    }
    if values.iter().filter(|&&x| x > 0.0).count() == 1 {
        return Ok(1.0 / n);
    }
    let sum_sq: f64 = values.iter().map(|x| x * x).sum();
    Ok((sum * sum / (n * sum_sq)).clamp(1.0 / n, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn equal_values_give_one() {
        assert_eq!(jain_index(&[5.0; 4]).unwrap(), 1.0);
    }

    #[test]
    fn single_recipient_gives_one_over_n() {
        assert_eq!(jain_index(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 0.25);
    }

    #[test]
    fn one_two_three() {
        let oracle = 36.0 / (3.0 * 14.0);
        assert_eq!(oracle, 36.0 / 42.0);
        assert!((jain_index(&[1.0, 2.0, 3.0]).unwrap() - oracle).abs() < 1e-15);
        assert!((oracle - 0.857143_f64).abs() < 1e-6);
    }

    #[test]
    fn undefined_inputs() {
        assert_eq!(jain_index(&[]), Err(FairshareError::EmptyInput));
        assert_eq!(jain_index(&[0.0, 0.0]), Err(FairshareError::AllZero));
        assert_eq!(jain_index(&[1.0, -1.0]), Err(FairshareError::InvalidValue));
    }

    proptest! {
        #[test]
        fn bounded_and_scale_invariant(v in proptest::collection::vec(0.0f64..100.0, 1..20), k in 0.001f64..1000.0) {
            prop_assume!(v.iter().any(|&x| x > 0.0));
            let j = jain_index(&v).unwrap();
            let n = v.len() as f64;
            prop_assert!(j >= 1.0 / n - 1e-12 && j <= 1.0);
            let scaled: Vec<f64> = v.iter().map(|x| x * k).collect();
            prop_assert!((jain_index(&scaled).unwrap() - j).abs() < 1e-12);
        }

        #[test]
        fn one_only_for_equal_vectors(x in 0.1f64..10.0, n in 1usize..10, bump in 0.01f64..1.0) {
            prop_assert_eq!(jain_index(&vec![x; n]).unwrap(), 1.0);
            if n > 1 {
                let mut v = vec![x; n];
                v[0] += bump;
                prop_assert!(jain_index(&v).unwrap() < 1.0);
            }
        }
    }
}
