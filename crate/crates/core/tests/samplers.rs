use nalgebra::{DMatrix, DVector};

use projsig::generators::{gen_iw_pair, sample_gaussian, sample_scaled_inverse_wishart, sample_wishart};
use projsig::{derive_stream, SpdMatrix};

fn mean_of(draws: impl Iterator<Item = DMatrix<f64>>) -> DMatrix<f64> {
    let mut n = 0usize;
    let mut acc: Option<DMatrix<f64>> = None;
    for d in draws {
        n += 1;
        acc = Some(match acc {
            Some(a) => a + d,
            None => d,
        });
    }
    acc.unwrap() / n as f64
}

fn max_abs_dev(m: &DMatrix<f64>, target: &DMatrix<f64>) -> f64 {
    (m - target).abs().max()
}

#[test]
fn chi_square_mean() {
    let root = derive_stream(10, &[]);
    let n = 100_000;
    let mean: f64 =
        (0..n).map(|i| sample_wishart(1, 5.0, &mut root.fork(i)).unwrap().matrix()[(0, 0)]).sum::<f64>() / n as f64;
    assert!((mean - 5.0).abs() < 0.15, "{mean}");
}

#[test]
fn wishart_mean_is_df_identity() {
    let root = derive_stream(11, &[]);
    let m = mean_of((0..10_000).map(|i| sample_wishart(5, 25.0, &mut root.fork(i)).unwrap().into_matrix()));
    let dev = max_abs_dev(&m, &(DMatrix::identity(5, 5) * 25.0));
    assert!(dev < 0.2, "{dev}");
}

#[test]
fn scalar_scaled_inverse_wishart_mean() {
    let root = derive_stream(12, &[]);
    let n = 100_000;
    let mean: f64 =
        (0..n).map(|i| sample_scaled_inverse_wishart(1, 5.0, &mut root.fork(i)).unwrap().matrix()[(0, 0)]).sum::<f64>()
            / n as f64;
    assert!((mean / (5.0 / 3.0) - 1.0).abs() < 0.03, "{mean}");
}

#[test]
fn scaled_inverse_wishart_mean() {
    let root = derive_stream(13, &[]);
    let m =
        mean_of((0..5_000).map(|i| sample_scaled_inverse_wishart(10, 50.0, &mut root.fork(i)).unwrap().into_matrix()));
    let expected = 50.0 / 39.0;
    for i in 0..10 {
        assert!((m[(i, i)] / expected - 1.0).abs() < 0.05, "diag {}", m[(i, i)]);
        for j in 0..10 {
            if i != j {
                assert!(m[(i, j)].abs() < 0.05 * expected, "off-diagonal {}", m[(i, j)]);
            }
        }
    }
}

#[test]
fn large_df_concentrates_at_identity() {
    let root = derive_stream(14, &[]);
    let m =
        mean_of((0..2_000).map(|i| sample_scaled_inverse_wishart(5, 500.0, &mut root.fork(i)).unwrap().into_matrix()));
    for i in 0..5 {
        assert!((m[(i, i)] - 1.0).abs() < 0.03, "{}", m[(i, i)]);
    }
}

#[test]
fn spread_shrinks_as_df_grows() {
    let p = 20;
    let root = derive_stream(15, &[]);
    let spread = |ratio: f64| {
        (0..200u64)
            .map(|i| {
                let s = sample_scaled_inverse_wishart(p, ratio * p as f64, &mut root.fork_path(&[ratio as u64, i]))
                    .unwrap();
                (s.matrix() - DMatrix::identity(p, p)).norm() / (p as f64).sqrt()
            })
            .sum::<f64>()
            / 200.0
    };
    let (a, b, c) = (spread(1.0), spread(2.0), spread(10.0));
    assert!(a > b && b > c, "{a} {b} {c}");
}

#[test]
fn iw_pair_members_are_independent() {
    let p = 4;
    let root = derive_stream(16, &[]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for i in 0..1_000 {
        let (a, b) = gen_iw_pair(p, 8.0, 8.0, &root.fork(i)).unwrap();
        xs.extend(a.matrix().iter().copied());
        ys.extend(b.matrix().iter().copied());
    }
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let rho = cov / (vx * vy).sqrt();
    assert!(rho.abs() < 0.1, "{rho}");
}

#[test]
fn iw_pair_extremes_are_strict_pd() {
    let (a, b) = gen_iw_pair(20, 20.0, 200.0, &derive_stream(17, &[])).unwrap();
    assert!(SpdMatrix::new_strict(a.into_matrix()).is_ok());
    assert!(SpdMatrix::new_strict(b.into_matrix()).is_ok());
}

#[test]
fn gaussian_sample_covariance() {
    let x = sample_gaussian(&DVector::zeros(2), &SpdMatrix::identity(2), 100_000, &mut derive_stream(18, &[])).unwrap();
    let c = x.transpose() * &x / x.nrows() as f64;
    assert!(max_abs_dev(&c, &DMatrix::identity(2, 2)) < 0.02, "{c}");
}
