//! Fast gradient sign adversarial examples.

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::model::Mlp;
use crate::objectives::cross_entropy_loss;
use crate::tensor::Tensor;

/// `clip(x + ε·sign(∇ₓ CE(f(x), y)))`, with `sign(0) = 0`. `clip` holds a
/// `(min, max)` pair per feature.
pub fn fgsm_attack(
    net: &Mlp,
    x: &Tensor,
    labels: &[usize],
    epsilon: f64,
    clip: Option<&[(f64, f64)]>,
) -> Result<Tensor> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::usage(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    if let Some(c) = clip {
        if c.len() != x.cols() {
            return Err(Error::usage(format!("{} clip ranges for {} features", c.len(), x.cols())));
        }
    }
    let tape = Tape::unchecked();
    let input = tape.leaf(x.clone());
    let reps = net.bind_constant(&tape).forward(input)?;
    let loss = cross_entropy_loss(*reps.last().expect("forward returns the output"), labels)?;
    let grads = tape.backward(loss)?;
    let g = grads.wrt(input);
    let d = x.cols();
    let mut adv = x.clone();
    for (idx, (v, gv)) in adv.data_mut().iter_mut().zip(g.data()).enumerate() {
        let sign = if *gv > 0.0 {
            1.0
        } else if *gv < 0.0 {
            -1.0
        } else {
            0.0
        };
        *v += epsilon * sign;
        if let Some(c) = clip {
            let (lo, hi) = c[idx % d];
            *v = v.clamp(lo, hi);
        }
    }
    Ok(adv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (Mlp, Tensor, Vec<usize>) {
        let net = Mlp::new(&[3, 6, 2], &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let x = Tensor::from_rows(&[[0.5, -1.0, 0.2], [1.5, 0.3, -0.7], [-0.4, 0.8, 1.1]]).unwrap();
        (net, x, vec![0, 1, 1])
    }

    #[test]
    fn zero_epsilon_is_identity() {
        let (net, x, y) = setup();
        assert_eq!(fgsm_attack(&net, &x, &y, 0.0, None).unwrap(), x);
    }

    #[test]
    fn perturbation_is_bounded_and_increases_loss() {
        let (net, x, y) = setup();
        let eps = 0.1;
        let adv = fgsm_attack(&net, &x, &y, eps, None).unwrap();
        for (a, b) in adv.data().iter().zip(x.data()) {
            assert!((a - b).abs() <= eps + 1e-15);
        }
        let loss = |t: &Tensor| {
            let tape = Tape::new();
            let out = net.bind_constant(&tape).forward(tape.constant(t.clone())).unwrap();
            cross_entropy_loss(*out.last().unwrap(), &y).unwrap().item()
        };
        assert!(loss(&adv) > loss(&x));
    }

    #[test]
    fn clipping_and_zero_gradient() {
        let (_, x, y) = setup();
        let flat = Mlp::zeros(&[3, 2]).unwrap();
        assert_eq!(fgsm_attack(&flat, &x, &y, 1.0, None).unwrap(), x);

        let (net, ..) = setup();
        let clip = vec![(-0.1, 0.1); 3];
        let adv = fgsm_attack(&net, &x, &y, 5.0, Some(&clip)).unwrap();
        assert!(adv.data().iter().all(|v| (-0.1..=0.1).contains(v)));
        assert!(fgsm_attack(&net, &x, &y, -1.0, None).is_err());
    }
}
