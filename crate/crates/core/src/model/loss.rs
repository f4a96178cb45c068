use super::tensor::Scalar;

/// Huber penalty of a single error.
#[inline]
pub fn huber<T: Scalar>(e: T, delta: T) -> T {
    let a = e.abs();
    if a <= delta {
        T::of(0.5) * e * e
    } else {
        delta * a - T::of(0.5) * delta * delta
    }
}

/// Derivative of [`huber`] with respect to the error.
#[inline]
pub fn huber_grad<T: Scalar>(e: T, delta: T) -> T {
    if e.abs() <= delta {
        e
    } else {
        delta * e.signum()
    }
}

/// Mean Huber loss over all elements.
pub fn huber_loss<T: Scalar>(pred: &[T], target: &[T], delta: T) -> T {
    assert_eq!(pred.len(), target.len(), "prediction and target differ in length");
    if pred.is_empty() {
        return T::zero();
    }
    let sum = pred
        .iter()
        .zip(target)
        .fold(T::zero(), |s, (&p, &y)| s + huber(p - y, delta));
    sum / T::of(pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(huber_loss(&[1.0f64, -2.0], &[1.0, -2.0], 1.0), 0.0);
        assert_eq!(huber_loss(&[2.0f64], &[0.0], 1.0), 1.5);
        assert_eq!(huber_loss(&[0.5f64], &[0.0], 1.0), 0.125);
        assert_eq!(huber_loss(&[0.0f64, 0.0], &[2.0, 0.5], 1.0), (1.5 + 0.125) / 2.0);
    }

    #[test]
    fn continuous_with_continuous_slope_at_threshold() {
        for delta in [0.3f64, 1.0, 4.0] {
            for sign in [1.0, -1.0] {
                let lo = sign * (delta - 1e-6);
                let hi = sign * (delta + 1e-6);
                assert!((huber(lo, delta) - huber(hi, delta)).abs() < 1e-5);
                assert!((huber_grad(lo, delta) - huber_grad(hi, delta)).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        for e in [-3.0f64, -0.7, 0.2, 0.99, 2.5] {
            let h = 1e-6;
            let fd = (huber(e + h, 1.0) - huber(e - h, 1.0)) / (2.0 * h);
            assert!((fd - huber_grad(e, 1.0)).abs() < 1e-6);
        }
    }
}
