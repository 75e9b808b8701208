//! Real-valued network input: `[Re(h_est); Im(h_est); snr_feature]`.

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// SNR feature: the SNR in dB divided by 10.
pub fn encode_snr(gamma: f64) -> Result<f64> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::domain(format!(
            "snr must be positive and finite, got {gamma}"
        )));
    }
    Ok(gamma.log10())
}

pub fn input_dim(n_t: usize) -> usize {
    2 * n_t + 1
}

/// Packs one estimate into a `2 n_t + 1` vector.
pub fn pack_input(h_est: &[Complex64], gamma_est: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(input_dim(h_est.len()));
    out.extend(h_est.iter().map(|z| z.re));
    out.extend(h_est.iter().map(|z| z.im));
    out.push(encode_snr(gamma_est)?);
    Ok(out)
}

/// Inverse of [`pack_input`]; returns the channel and the linear SNR.
pub fn unpack_input(x: &[f64], n_t: usize) -> Result<(Vec<Complex64>, f64)> {
    if x.len() != input_dim(n_t) {
        return Err(Error::domain(format!(
            "input length {} does not match n_t={n_t}",
            x.len()
        )));
    }
    let h = (0..n_t).map(|i| Complex64::new(x[i], x[n_t + i])).collect();
    Ok((h, 10f64.powf(x[2 * n_t])))
}

/// Packs a batch row by row into a `(batch, 2 n_t + 1)` matrix.
pub fn pack_batch<'a, I>(n_t: usize, rows: I) -> Result<Array2<f64>>
where
    I: IntoIterator<Item = (&'a [Complex64], f64)>,
{
    let mut data = Vec::new();
    let mut count = 0;
    for (h, gamma) in rows {
        if h.len() != n_t {
            return Err(Error::domain(format!(
                "row {count} has {} antennas, expected {n_t}",
                h.len()
            )));
        }
        data.extend(pack_input(h, gamma)?);
        count += 1;
    }
    Array2::from_shape_vec((count, input_dim(n_t)), data)
        .map_err(|e| Error::structural(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn snr_encoding() {
        assert_eq!(encode_snr(1.0).unwrap(), 0.0);
        assert_abs_diff_eq!(encode_snr(100.0).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(encode_snr(0.01).unwrap(), -2.0, epsilon = 1e-15);
        assert!(encode_snr(0.0).is_err());
        assert!(encode_snr(-1.0).is_err());
    }

    #[test]
    fn packing_layout() {
        let h = [Complex64::new(1.0, 2.0), Complex64::new(3.0, -1.0)];
        assert_eq!(pack_input(&h, 1.0).unwrap(), vec![1.0, 3.0, 2.0, -1.0, 0.0]);
        let zero = [Complex64::new(0.0, 0.0); 2];
        assert_eq!(pack_input(&zero, 1.0).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn unpack_inverts_pack() {
        let h = vec![
            Complex64::new(0.5, -2.0),
            Complex64::new(-1.5, 0.25),
            Complex64::new(0.0, 1.0),
        ];
        let x = pack_input(&h, 31.0).unwrap();
        let (back, gamma) = unpack_input(&x, 3).unwrap();
        assert_eq!(back, h);
        assert_abs_diff_eq!(gamma, 31.0, epsilon = 1e-12);
        assert!(unpack_input(&x, 2).is_err());
    }

    #[test]
    fn batch_rejects_wrong_length() {
        let a = [Complex64::new(1.0, 0.0); 2];
        let b = [Complex64::new(1.0, 0.0); 3];
        assert!(pack_batch(2, [(&a[..], 1.0), (&b[..], 1.0)]).is_err());
        assert_eq!(
            pack_batch(2, [(&a[..], 1.0), (&a[..], 10.0)])
                .unwrap()
                .dim(),
            (2, 5)
        );
    }
}
