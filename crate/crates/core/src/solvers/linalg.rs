use nalgebra::{DMatrix, DVector};

/// Dominant eigenvalue and eigenvector of a symmetric PSD matrix by power
/// iteration, optionally started from a previously returned eigenvector.
pub fn power_method_max_eig(s: &DMatrix<f64>, warm: Option<&DVector<f64>>) -> (f64, DVector<f64>) {
    let n = s.nrows();
    assert_eq!(n, s.ncols(), "power method needs a square matrix");
    if n == 0 {
        return (0.0, DVector::zeros(0));
    }
    let mut v = match warm {
        Some(w) if w.len() == n && w.norm() > 0.0 => w.normalize(),
        _ => DVector::from_fn(n, |i, _| 1.0 + (i as f64 + 1.0).sqrt() / n as f64).normalize(),
    };
    let mut w = s * &v;
    let mut lam = v.dot(&w);
    if w.norm() == 0.0 {
        // warm vector may lie in the null space; retry from the default start
        if warm.is_some() {
            return power_method_max_eig(s, None);
        }
        return (0.0, unit(n));
    }
    for _ in 0..20_000 {
        let nw = w.norm();
        if nw == 0.0 {
            return (0.0, unit(n));
        }
        v = w / nw;
        w = s * &v;
        let next = v.dot(&w);
        let done = (next - lam).abs() <= 1e-14 * next.abs().max(f64::MIN_POSITIVE);
        lam = next;
        if done {
            break;
        }
    }
    (lam.max(0.0), v)
}

fn unit(n: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[0] = 1.0;
    e
}
