use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// `y = x·W + b`, row-wise bias broadcast. `x: [n, in]`, `W: [in, out]`,
/// `b: [out]`.
pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    x.require_2d("linear input")?;
    w.require_2d("linear weight")?;
    if x.cols() != w.rows() {
        return Err(Error::Dim(format!(
            "linear: input cols {} != weight rows {}",
            x.cols(),
            w.rows()
        )));
    }
    if b.len() != w.cols() {
        return Err(Error::Dim(format!(
            "linear: bias len {} != weight cols {}",
            b.len(),
            w.cols()
        )));
    }
    let (n, k_in, k_out) = (x.rows(), w.rows(), w.cols());
    let mut out = vec![0.0; n * k_out];
    for i in 0..n {
        let xi = x.row(i);
        let oi = &mut out[i * k_out..(i + 1) * k_out];
        oi.copy_from_slice(b.data());
        for (k, &xv) in xi.iter().enumerate().take(k_in) {
            let wrow = w.row(k);
            for j in 0..k_out {
                oi[j] += xv * wrow[j];
            }
        }
    }
    Tensor::matrix(n, k_out, out)
}

/// Exact analytic gradients of the linear map given the upstream gradient
/// and the forward inputs: `gx = up·Wᵀ`, `gW = xᵀ·up`, `gb = colsum(up)`.
pub fn linear_backward(upstream: &Tensor, x: &Tensor, w: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    upstream.require_2d("linear upstream")?;
    if upstream.rows() != x.rows() || upstream.cols() != w.cols() || x.cols() != w.rows() {
        return Err(Error::Dim(format!(
            "linear backward: upstream {:?} vs x {:?}, W {:?}",
            upstream.shape(),
            x.shape(),
            w.shape()
        )));
    }
    let (n, k_in, k_out) = (x.rows(), w.rows(), w.cols());

    let mut gx = vec![0.0; n * k_in];
    for i in 0..n {
        let ui = upstream.row(i);
        let gxi = &mut gx[i * k_in..(i + 1) * k_in];
        for k in 0..k_in {
            let wrow = w.row(k);
            let mut acc = 0.0;
            for j in 0..k_out {
                acc += ui[j] * wrow[j];
            }
            gxi[k] = acc;
        }
    }

    let mut gw = vec![0.0; k_in * k_out];
    for i in 0..n {
        let xi = x.row(i);
        let ui = upstream.row(i);
        for (k, &xv) in xi.iter().enumerate() {
            let grow = &mut gw[k * k_out..(k + 1) * k_out];
            for j in 0..k_out {
                grow[j] += xv * ui[j];
            }
        }
    }

    let mut gb = vec![0.0; k_out];
    for i in 0..n {
        let ui = upstream.row(i);
        for j in 0..k_out {
            gb[j] += ui[j];
        }
    }

    Ok((
        Tensor::matrix(n, k_in, gx)?,
        Tensor::matrix(k_in, k_out, gw)?,
        Tensor::vector(gb)?,
    ))
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(x.shape().to_vec(), data).expect("relu preserves shape and finiteness")
}

/// Backward of [`relu`]: upstream masked where the forward input was `<= 0`.
/// The subgradient at exactly 0 is taken as 0.
pub fn relu_backward(upstream: &Tensor, x: &Tensor) -> Result<Tensor> {
    if upstream.shape() != x.shape() {
        return Err(Error::Dim(format!(
            "relu backward: upstream {:?} != input {:?}",
            upstream.shape(),
            x.shape()
        )));
    }
    let data = upstream
        .data()
        .iter()
        .zip(x.data())
        .map(|(&u, &v)| if v > 0.0 { u } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Mean cross-entropy of softmaxed logits against integer labels, plus the
/// gradient w.r.t. the logits: `(softmax − onehot) / n`. Rows are max-shifted
/// before exponentiation so arbitrary logit magnitudes stay finite.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    logits.require_2d("logits")?;
    let (n, k) = (logits.rows(), logits.cols());
    if labels.len() != n {
        return Err(Error::Dim(format!("{} labels for {} logit rows", labels.len(), n)));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::Input(format!("label {bad} out of range for {k} classes")));
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; n * k];
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &z in row {
            denom += (z - max).exp();
        }
        let log_denom = denom.ln();
        loss -= (row[labels[i]] - max - log_denom) * inv_n;
        let grow = &mut grad[i * k..(i + 1) * k];
        for j in 0..k {
            grow[j] = ((row[j] - max).exp() / denom) * inv_n;
        }
        grow[labels[i]] -= inv_n;
    }
    Ok((loss, Tensor::matrix(n, k, grad)?))
}

/// Sum of squared entries of a flat slice.
pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Cosine similarity `u·v / (‖u‖‖v‖)`. Errors when either norm is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dim(format!("cosine: lengths {} vs {}", u.len(), v.len())));
    }
    let nu = norm_sq(u).sqrt();
    let nv = norm_sq(v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Input("cosine of zero vector is undefined".into()));
    }
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngState;
    use proptest::prelude::*;

    fn rand_tensor(rows: usize, cols: usize, rng: &mut RngState) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Tensor::matrix(rows, cols, data).unwrap()
    }

    #[test]
    fn linear_identity_case() {
        let x = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let w = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![0.0, 0.0]).unwrap();
        let y = linear_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn linear_hand_arithmetic() {
        // [1 2]·[[1],[1]] + [3] = [6]
        let x = Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap();
        let w = Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap();
        let b = Tensor::vector(vec![3.0]).unwrap();
        let y = linear_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[6.0]);
    }

    #[test]
    fn linear_matches_triple_loop_oracle() {
        let mut rng = RngState::new(11);
        let x = rand_tensor(4, 3, &mut rng);
        let w = rand_tensor(3, 2, &mut rng);
        let b = Tensor::vector((0..2).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let y = linear_forward(&x, &w, &b).unwrap();
        // Independent naive product.
        for i in 0..4 {
            for j in 0..2 {
                let mut expect = b.data()[j];
                for k in 0..3 {
                    expect += x.at(i, k) * w.at(k, j);
                }
                assert!((y.at(i, j) - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn linear_shape_mismatch() {
        let x = Tensor::matrix(2, 3, vec![0.0; 6]).unwrap();
        let w = Tensor::matrix(2, 2, vec![0.0; 4]).unwrap();
        let b = Tensor::vector(vec![0.0, 0.0]).unwrap();
        assert!(matches!(linear_forward(&x, &w, &b), Err(Error::Dim(_))));
    }

    #[test]
    fn linear_backward_zero_upstream() {
        let x = Tensor::matrix(2, 3, vec![1.0; 6]).unwrap();
        let w = Tensor::matrix(3, 2, vec![1.0; 6]).unwrap();
        let up = Tensor::zeros(vec![2, 2]);
        let (gx, gw, gb) = linear_backward(&up, &x, &w).unwrap();
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(gw.data().iter().all(|&v| v == 0.0));
        assert!(gb.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_backward_scalar_case() {
        // x=2, W=3, upstream=1 -> gx=3, gW=2, gb=1
        let x = Tensor::matrix(1, 1, vec![2.0]).unwrap();
        let w = Tensor::matrix(1, 1, vec![3.0]).unwrap();
        let up = Tensor::matrix(1, 1, vec![1.0]).unwrap();
        let (gx, gw, gb) = linear_backward(&up, &x, &w).unwrap();
        assert_eq!(gx.data(), &[3.0]);
        assert_eq!(gw.data(), &[2.0]);
        assert_eq!(gb.data(), &[1.0]);
    }

    /// Central finite differences of `f` w.r.t. one slot of a flat buffer.
    fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, buf: &mut [f64], i: usize, h: f64) -> f64 {
        let orig = buf[i];
        buf[i] = orig + h;
        let fp = f(buf);
        buf[i] = orig - h;
        let fm = f(buf);
        buf[i] = orig;
        (fp - fm) / (2.0 * h)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn linear_backward_matches_finite_differences() {
        let mut rng = RngState::new(21);
        let x = rand_tensor(3, 4, &mut rng);
        let w = rand_tensor(4, 2, &mut rng);
        let b = Tensor::vector((0..2).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        // Scalar objective: weighted sum of outputs with fixed coefficients,
        // so upstream = coefficient matrix.
        let coef = rand_tensor(3, 2, &mut rng);
        let objective = |xd: &[f64], wd: &[f64], bd: &[f64]| -> f64 {
            let xt = Tensor::matrix(3, 4, xd.to_vec()).unwrap();
            let wt = Tensor::matrix(4, 2, wd.to_vec()).unwrap();
            let bt = Tensor::vector(bd.to_vec()).unwrap();
            let y = linear_forward(&xt, &wt, &bt).unwrap();
            y.data().iter().zip(coef.data()).map(|(a, c)| a * c).sum()
        };
        let (gx, gw, gb) = linear_backward(&coef, &x, &w).unwrap();

        let h = 1e-5;
        let mut xbuf = x.data().to_vec();
        for i in 0..xbuf.len() {
            let fd = central_diff(
                &mut |xd| objective(xd, w.data(), b.data()),
                &mut xbuf,
                i,
                h,
            );
            assert!(rel_err(fd, gx.data()[i]) < 1e-6, "gx[{i}]: fd={fd} an={}", gx.data()[i]);
        }
        let mut wbuf = w.data().to_vec();
        for i in 0..wbuf.len() {
            let fd = central_diff(
                &mut |wd| objective(x.data(), wd, b.data()),
                &mut wbuf,
                i,
                h,
            );
            assert!(rel_err(fd, gw.data()[i]) < 1e-6, "gw[{i}]");
        }
        let mut bbuf = b.data().to_vec();
        for i in 0..bbuf.len() {
            let fd = central_diff(
                &mut |bd| objective(x.data(), w.data(), bd),
                &mut bbuf,
                i,
                h,
            );
            assert!(rel_err(fd, gb.data()[i]) < 1e-6, "gb[{i}]");
        }
    }

    #[test]
    fn relu_cases() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let up = Tensor::vector(vec![5.0, 5.0, 5.0]).unwrap();
        // Subgradient at 0 is 0, so the middle entry is masked.
        assert_eq!(relu_backward(&up, &x).unwrap().data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn relu_backward_matches_finite_differences_away_from_kink() {
        let mut rng = RngState::new(31);
        // Keep inputs away from the kink so central differences are exact.
        let data: Vec<f64> = (0..40)
            .map(|_| {
                let v = rng.uniform(-1.0, 1.0);
                if v.abs() < 0.05 { v + 0.2 } else { v }
            })
            .collect();
        let x = Tensor::vector(data).unwrap();
        let coef: Vec<f64> = (0..40).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let up = Tensor::vector(coef.clone()).unwrap();
        let g = relu_backward(&up, &x).unwrap();
        let mut buf = x.data().to_vec();
        for i in 0..buf.len() {
            let fd = central_diff(
                &mut |xd| {
                    let xt = Tensor::vector(xd.to_vec()).unwrap();
                    relu(&xt).data().iter().zip(&coef).map(|(a, c)| a * c).sum()
                },
                &mut buf,
                i,
                1e-5,
            );
            assert!(rel_err(fd, g.data()[i]) < 1e-6, "relu grad [{i}]");
        }
    }

    #[test]
    fn softmax_ce_uniform_logits() {
        let logits = Tensor::matrix(2, 4, vec![0.5; 8]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[1, 3]).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12, "loss {loss} vs ln4");
    }

    #[test]
    fn softmax_ce_confident_correct_goes_to_zero() {
        let logits = Tensor::matrix(1, 3, vec![60.0, 0.0, 0.0]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!((0.0..1e-12).contains(&loss), "loss {loss}");
    }

    #[test]
    fn softmax_ce_label_out_of_range() {
        let logits = Tensor::matrix(1, 3, vec![0.0; 3]).unwrap();
        assert!(matches!(
            softmax_cross_entropy(&logits, &[3]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn softmax_ce_grad_matches_finite_differences() {
        let mut rng = RngState::new(41);
        let logits = rand_tensor(3, 5, &mut rng);
        let labels = vec![0, 4, 2];
        let (_, grad) = softmax_cross_entropy(&logits, &labels).unwrap();
        let mut buf = logits.data().to_vec();
        for i in 0..buf.len() {
            let fd = central_diff(
                &mut |zd| {
                    let zt = Tensor::matrix(3, 5, zd.to_vec()).unwrap();
                    softmax_cross_entropy(&zt, &labels).unwrap().0
                },
                &mut buf,
                i,
                1e-5,
            );
            assert!(rel_err(fd, grad.data()[i]) < 1e-6, "softmax grad [{i}]");
        }
    }

    #[test]
    fn norm_and_cosine_cases() {
        assert_eq!(norm_sq(&[3.0, 4.0]), 25.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Input(_))));
    }

    #[test]
    fn cosine_of_identical_random_vector_is_one() {
        let mut rng = RngState::new(51);
        let v: Vec<f64> = (0..64).map(|_| rng.normal()).collect();
        let c = cosine(&v, &v).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    proptest! {
        // Probability-simplex tangency: each softmax gradient row sums to 0.
        #[test]
        fn softmax_grad_rows_sum_to_zero(vals in proptest::collection::vec(-20.0f64..20.0, 12)) {
            let logits = Tensor::matrix(3, 4, vals).unwrap();
            let (_, grad) = softmax_cross_entropy(&logits, &[0, 1, 2]).unwrap();
            for i in 0..3 {
                let s: f64 = grad.row(i).iter().sum();
                prop_assert!(s.abs() < 1e-12);
            }
        }

        #[test]
        fn cosine_bounded(u in proptest::collection::vec(-10.0f64..10.0, 8),
                          v in proptest::collection::vec(-10.0f64..10.0, 8)) {
            prop_assume!(norm_sq(&u) > 1e-12 && norm_sq(&v) > 1e-12);
            let c = cosine(&u, &v).unwrap();
            prop_assert!((-1.0..=1.0).contains(&c));
        }

        // Same inputs, bit-identical outputs.
        #[test]
        fn linear_forward_deterministic(vals in proptest::collection::vec(-5.0f64..5.0, 6)) {
            let x = Tensor::matrix(1, 2, vals[0..2].to_vec()).unwrap();
            let w = Tensor::matrix(2, 2, vals[2..6].to_vec()).unwrap();
            let b = Tensor::vector(vec![0.1, -0.2]).unwrap();
            let a = linear_forward(&x, &w, &b).unwrap();
            let bb = linear_forward(&x, &w, &b).unwrap();
            prop_assert_eq!(a.data(), bb.data());
        }
    }
}
