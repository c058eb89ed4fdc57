use statrs::distribution::{Binomial, DiscreteCDF};

/// Outcome of a one-sided sign test on paired differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(X ≥ wins)` for `X ~ Binomial(wins + losses, 1/2)`; ties dropped.
    pub p_value: f64,
}

/// Tests whether `a[k] > b[k]` more often than chance.
pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    assert_eq!(a.len(), b.len(), "paired samples differ in length");
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let ties = a.len() - wins - losses;
    let trials = (wins + losses) as u64;
    let p_value = if wins == 0 {
        1.0
    } else {
        let dist = Binomial::new(0.5, trials).expect("valid binomial");
        dist.sf(wins as u64 - 1)
    };
    SignTest { wins, losses, ties, p_value }
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_tail() {
        let t = sign_test(&[1.0; 10], &[0.0; 10]);
        assert_eq!((t.wins, t.losses), (10, 0));
        assert!((t.p_value - 1.0 / 1024.0).abs() < 1e-12);
        // 8 of 10: (45 + 10 + 1) / 1024
        let a = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 5.0];
        let b = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 5.0];
        let t = sign_test(&a, &b);
        assert_eq!(t.ties, 1);
        assert!((t.p_value - 56.0 / 1024.0).abs() < 1e-12);
        assert_eq!(sign_test(&[0.0], &[1.0]).p_value, 1.0);
    }

    #[test]
    fn sample_deviation() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }
}
