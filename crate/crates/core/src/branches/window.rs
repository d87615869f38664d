use crate::error::{Result, WetError};
use crate::numerics::Tensor;

/// Lagged and forecast copies of a series, plus their concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedWindow {
    /// `[S, W * n_in]`
    pub lagged: Tensor,
    /// `[S, W * n_out]`
    pub forecast: Tensor,
    /// `[S, W * (n_in + n_out)]`
    pub transformed: Tensor,
}

/// Cuts `n_in` lagged and `n_out` forecast windows of width `w` from each
/// row of `record` (`[S, T]`). Windows are anchored at the end of the
/// series: the forecast copies are the last `w * n_out` samples and the
/// lagged copies are the `w * n_in` samples before them, oldest first.
pub fn supervised_transform(
    record: &Tensor,
    w: usize,
    n_in: usize,
    n_out: usize,
) -> Result<SupervisedWindow> {
    if record.ndim() != 2 {
        return Err(WetError::dim(
            "supervised_transform",
            format!("record must be [S, T], got {:?}", record.shape()),
        ));
    }
    let (s, t) = (record.rows(), record.cols());
    let need = w * (n_in + n_out);
    if w == 0 {
        return Err(WetError::invalid("window width must be at least 1"));
    }
    if t < need {
        return Err(WetError::invalid(format!(
            "series of length {t} cannot supply {n_in} lagged and {n_out} forecast windows of width {w}"
        )));
    }
    let anchor = t - w * n_out;
    let cut = |start: usize, len: usize| -> Result<Tensor> {
        let mut data = Vec::with_capacity(s * len);
        for r in 0..s {
            data.extend_from_slice(&record.row(r)[start..start + len]);
        }
        Tensor::new(&[s, len], data)
    };
    let lagged = cut(anchor - w * n_in, w * n_in)?;
    let forecast = cut(anchor, w * n_out)?;
    let transformed = cut(anchor - w * n_in, need)?;
    Ok(SupervisedWindow {
        lagged,
        forecast,
        transformed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transformed_shapes() {
        let rec = Tensor::new(&[2, 9], (0..18).map(f64::from).collect()).unwrap();
        let win = supervised_transform(&rec, 3, 2, 1).unwrap();
        assert_eq!(win.transformed.shape(), &[2, 9]);
        assert_eq!(win.lagged.shape(), &[2, 6]);
        assert_eq!(win.forecast.shape(), &[2, 3]);
        assert_eq!(win.forecast.row(0), &[6.0, 7.0, 8.0]);
        assert_eq!(win.lagged.row(1), &[9.0, 10.0, 11.0, 12.0, 13.0, 14.0]);
    }

    #[test]
    fn no_forecast_means_lagged_only() {
        let rec = Tensor::new(&[1, 7], (0..7).map(f64::from).collect()).unwrap();
        let win = supervised_transform(&rec, 7, 1, 0).unwrap();
        assert_eq!(win.transformed, win.lagged);
        assert_eq!(win.transformed, rec);
    }

    #[test]
    fn constant_series_windows_match() {
        let rec = Tensor::filled(&[3, 12], 2.5);
        let win = supervised_transform(&rec, 4, 2, 1).unwrap();
        let t = &win.transformed;
        for r in 0..3 {
            for k in 1..3 {
                assert_eq!(&t.row(r)[..4], &t.row(r)[4 * k..4 * k + 4]);
            }
        }
    }

    #[test]
    fn short_series_rejected() {
        let rec = Tensor::zeros(&[1, 5]);
        assert!(supervised_transform(&rec, 3, 1, 1).is_err());
        assert!(supervised_transform(&rec, 0, 1, 1).is_err());
    }
}
