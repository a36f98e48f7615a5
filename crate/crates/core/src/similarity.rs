use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Cosine of the angle between `u` and `v`, computed in `T` precision and clamped to
/// `[-1, 1]`. Zero-norm inputs are reported as `"lhs"` / `"rhs"`; callers that know row
/// ids should use [`cosine_similarity_named`].
pub fn cosine_similarity<T: Scalar>(u: &[T], v: &[T]) -> Result<T> {
    cosine_similarity_named(u, "lhs", v, "rhs")
}

pub fn cosine_similarity_named<T: Scalar>(u: &[T], u_id: &str, v: &[T], v_id: &str) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    let nu = norm(u);
    if nu == T::zero() {
        return Err(Error::ZeroNorm { id: u_id.to_owned() });
    }
    let nv = norm(v);
    if nv == T::zero() {
        return Err(Error::ZeroNorm { id: v_id.to_owned() });
    }
    let cos = dot(u, v) / (nu * nv);
    Ok(cos.max(-T::one()).min(T::one()))
}

pub fn dot<T: Scalar>(u: &[T], v: &[T]) -> T {
    u.iter().zip(v).map(|(&a, &b)| a * b).sum()
}

pub fn norm<T: Scalar>(u: &[T]) -> T {
    dot(u, u).sqrt()
}

/// Widens a stored `f32` row into `T`.
pub fn widen<T: Scalar>(row: &[f32]) -> Vec<T> {
    row.iter().map(|&x| T::from_stored(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine_similarity(&[1.0f64, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            cosine_similarity(&[1.0f64, 1.0], &[1.0, 0.0]).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-7
        );
        assert_abs_diff_eq!(
            cosine_similarity(&[1.0f32, 1.0], &[1.0, 0.0]).unwrap(),
            std::f32::consts::FRAC_1_SQRT_2,
            epsilon = 1e-7
        );
    }

    #[test]
    fn zero_norm_names_the_row() {
        let err = cosine_similarity_named(&[1.0f64, 0.0], "img-7", &[0.0, 0.0], "zebra").unwrap_err();
        assert!(matches!(err, Error::ZeroNorm { ref id } if id == "zebra"));
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            cosine_similarity(&[1.0f64], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    fn nonzero_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0f64..10.0, 1..16).prop_filter("nonzero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn self_similarity_is_one(u in nonzero_vec()) {
            prop_assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() <= 1e-6);
        }

        #[test]
        fn positive_scale_invariance(
            (u, v) in (1usize..16).prop_flat_map(|d| (
                prop::collection::vec(-10.0f64..10.0, d),
                prop::collection::vec(-10.0f64..10.0, d),
            )).prop_filter("nonzero", |(u, v)| norm(u) > 1e-3 && norm(v) > 1e-3),
            alpha in 1e-3f64..1e3,
        ) {
            let scaled: Vec<f64> = u.iter().map(|x| x * alpha).collect();
            let a = cosine_similarity(&scaled, &v).unwrap();
            let b = cosine_similarity(&u, &v).unwrap();
            prop_assert!((a - b).abs() <= 1e-6);
            prop_assert!((b - cosine_similarity(&v, &u).unwrap()).abs() <= 1e-12);
            prop_assert!((-1.0..=1.0).contains(&b));
        }
    }
}
