//! Per-channel spatial pooling used to shrink feature maps before aggregation.

use std::fmt;
use std::str::FromStr;

use crate::afm::{AfmVector, Shape};
use crate::error::{CrlError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolMode {
    Avg,
    Max,
    Min,
}

impl fmt::Display for PoolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolMode::Avg => "avg",
            PoolMode::Max => "max",
            PoolMode::Min => "min",
        })
    }
}

impl FromStr for PoolMode {
    type Err = CrlError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "avg" => Ok(PoolMode::Avg),
            "max" => Ok(PoolMode::Max),
            "min" => Ok(PoolMode::Min),
            other => Err(CrlError::InvalidPooling(format!(
                "unknown mode {other:?}, expected avg, max or min"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PoolingSpec {
    pub mode: PoolMode,
    /// (rows, cols)
    pub filter: (usize, usize),
    /// (rows, cols)
    pub stride: (usize, usize),
}

impl PoolingSpec {
    pub fn new(mode: PoolMode, filter: (usize, usize), stride: (usize, usize)) -> Result<Self> {
        if filter.0 == 0 || filter.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(CrlError::InvalidPooling(
                "filter and stride extents must be at least 1".into(),
            ));
        }
        Ok(Self {
            mode,
            filter,
            stride,
        })
    }

    /// Output grid for an input grid, or an error if the filter does not fit.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        let height = window_count(input.height, self.filter.0, self.stride.0)
            .ok_or_else(|| self.too_large(input))?;
        let width = window_count(input.width, self.filter.1, self.stride.1)
            .ok_or_else(|| self.too_large(input))?;
        Ok(Shape::new(height, width, input.channels))
    }

    fn too_large(&self, input: Shape) -> CrlError {
        CrlError::InvalidPooling(format!(
            "filter {}x{} larger than grid {}x{}",
            self.filter.0, self.filter.1, input.height, input.width
        ))
    }
}

/// Compact `mode:FhxFw:ShxSw` form, used in model metadata.
impl fmt::Display for PoolingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}x{}:{}x{}",
            self.mode, self.filter.0, self.filter.1, self.stride.0, self.stride.1
        )
    }
}

impl FromStr for PoolingSpec {
    type Err = CrlError;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split(':');
        let (Some(mode), Some(filter), Some(stride), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(CrlError::InvalidPooling(format!("cannot parse {s:?}")));
        };
        PoolingSpec::new(mode.parse()?, parse_pair(filter)?, parse_pair(stride)?)
    }
}

/// Parses `AxB`, or a bare `A` meaning `AxA`.
pub fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let bad = || CrlError::InvalidPooling(format!("{s:?} is not of the form N or NxM"));
    let num = |p: &str| p.trim().parse::<usize>().map_err(|_| bad());
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok((num(a)?, num(b)?)),
        None => {
            let n = num(s)?;
            Ok((n, n))
        }
    }
}

/// Window starts are `0, s, 2s, ...`; a window hanging past the grid edge is
/// truncated, and starts beyond the last cell are dropped.
fn window_count(extent: usize, filter: usize, stride: usize) -> Option<usize> {
    if filter > extent {
        return None;
    }
    let by_formula = (extent - filter).div_ceil(stride) + 1;
    Some(by_formula.min(extent.div_ceil(stride)))
}

pub fn pool(afm: &AfmVector, spec: &PoolingSpec) -> Result<AfmVector> {
    let input = afm.shape();
    let output = spec.output_shape(input)?;
    let values = afm.values();
    let channels = input.channels;
    let mut out = Vec::with_capacity(output.dim());

    for oh in 0..output.height {
        let h0 = oh * spec.stride.0;
        let h1 = (h0 + spec.filter.0).min(input.height);
        for ow in 0..output.width {
            let w0 = ow * spec.stride.1;
            let w1 = (w0 + spec.filter.1).min(input.width);
            for c in 0..channels {
                let window = (h0..h1).flat_map(|h| {
                    (w0..w1).map(move |w| values[(h * input.width + w) * channels + c])
                });
                let v = match spec.mode {
                    PoolMode::Avg => {
                        let n = ((h1 - h0) * (w1 - w0)) as f64;
                        (window.map(f64::from).sum::<f64>() / n) as f32
                    }
                    PoolMode::Max => window.fold(f32::NEG_INFINITY, f32::max),
                    PoolMode::Min => window.fold(f32::INFINITY, f32::min),
                };
                out.push(v);
            }
        }
    }
    AfmVector::new(out, output)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(mode: PoolMode, f: usize, s: usize) -> PoolingSpec {
        PoolingSpec::new(mode, (f, f), (s, s)).unwrap()
    }

    /// Independent window scan over an (h, w, c) accessor.
    fn brute_force(afm: &AfmVector, spec: &PoolingSpec) -> Vec<f32> {
        let s = afm.shape();
        let at = |h: usize, w: usize, c: usize| afm.values()[(h * s.width + w) * s.channels + c];
        let mut starts_h = vec![];
        let mut h = 0;
        while h < s.height {
            starts_h.push(h);
            if h + spec.filter.0 >= s.height {
                break;
            }
            h += spec.stride.0;
        }
        let mut starts_w = vec![];
        let mut w = 0;
        while w < s.width {
            starts_w.push(w);
            if w + spec.filter.1 >= s.width {
                break;
            }
            w += spec.stride.1;
        }
        let mut out = vec![];
        for &h0 in &starts_h {
            for &w0 in &starts_w {
                for c in 0..s.channels {
                    let mut cells = vec![];
                    for h in h0..(h0 + spec.filter.0).min(s.height) {
                        for w in w0..(w0 + spec.filter.1).min(s.width) {
                            cells.push(at(h, w, c));
                        }
                    }
                    out.push(match spec.mode {
                        PoolMode::Max => cells.iter().cloned().fold(f32::MIN, f32::max),
                        PoolMode::Min => cells.iter().cloned().fold(f32::MAX, f32::min),
                        PoolMode::Avg => {
                            (cells.iter().map(|&v| v as f64).sum::<f64>() / cells.len() as f64)
                                as f32
                        }
                    });
                }
            }
        }
        out
    }

    #[test]
    fn two_by_two_max() {
        let afm = AfmVector::new(vec![1.0, 2.0, 3.0, 4.0], Shape::new(2, 2, 1)).unwrap();
        let out = pool(&afm, &spec(PoolMode::Max, 2, 2)).unwrap();
        assert_eq!(out.values(), &[4.0]);
        assert_eq!(out.shape(), Shape::new(1, 1, 1));
        assert_eq!(
            pool(&afm, &spec(PoolMode::Min, 2, 2)).unwrap().values(),
            &[1.0]
        );
        assert_eq!(
            pool(&afm, &spec(PoolMode::Avg, 2, 2)).unwrap().values(),
            &[2.5]
        );
    }

    #[test]
    fn constant_map_stays_constant() {
        let shape = Shape::new(5, 7, 3);
        let afm = AfmVector::new(vec![0.75; shape.dim()], shape).unwrap();
        for mode in [PoolMode::Avg, PoolMode::Max, PoolMode::Min] {
            let out = pool(&afm, &spec(mode, 2, 2)).unwrap();
            assert_eq!(out.shape(), Shape::new(3, 4, 3));
            assert!(out.values().iter().all(|&v| v == 0.75));
        }
    }

    #[test]
    fn inception_grid_reduction() {
        let shape = Shape::new(8, 8, 192);
        let out = spec(PoolMode::Avg, 2, 2).output_shape(shape).unwrap();
        assert_eq!(out, Shape::new(4, 4, 192));
        assert_eq!(out.dim(), 3072);
    }

    #[test]
    fn channels_pool_independently() {
        // channel 0 holds 1..4, channel 1 holds -1..-4
        let values = vec![1.0, -1.0, 2.0, -2.0, 3.0, -3.0, 4.0, -4.0];
        let afm = AfmVector::new(values, Shape::new(2, 2, 2)).unwrap();
        let out = pool(&afm, &spec(PoolMode::Max, 2, 2)).unwrap();
        assert_eq!(out.values(), &[4.0, -1.0]);
    }

    #[test]
    fn matches_window_scan_on_ragged_grids() {
        let shape = Shape::new(7, 5, 2);
        let values: Vec<f32> = (0..shape.dim())
            .map(|i| ((i * 37) % 23) as f32 - 11.0)
            .collect();
        let afm = AfmVector::new(values, shape).unwrap();
        for mode in [PoolMode::Avg, PoolMode::Max, PoolMode::Min] {
            for (f, s) in [(2, 2), (3, 2), (2, 1), (3, 3), (1, 1)] {
                let sp = spec(mode, f, s);
                assert_eq!(
                    pool(&afm, &sp).unwrap().values(),
                    brute_force(&afm, &sp),
                    "{sp}"
                );
            }
        }
    }

    #[test]
    fn tail_windows_are_truncated() {
        // 3 rows, filter 2 stride 2: windows [0,2) and [2,3)
        let afm = AfmVector::new(vec![1.0, 2.0, 9.0], Shape::new(3, 1, 1)).unwrap();
        let sp = PoolingSpec::new(PoolMode::Avg, (2, 1), (2, 1)).unwrap();
        assert_eq!(pool(&afm, &sp).unwrap().values(), &[1.5, 9.0]);
    }

    #[test]
    fn stride_wider_than_filter_drops_empty_windows() {
        let sp = PoolingSpec::new(PoolMode::Max, (1, 1), (3, 3)).unwrap();
        assert_eq!(
            sp.output_shape(Shape::new(5, 5, 1)).unwrap(),
            Shape::new(2, 2, 1)
        );
        assert_eq!(
            sp.output_shape(Shape::new(7, 7, 1)).unwrap(),
            Shape::new(3, 3, 1)
        );
    }

    #[test]
    fn filter_larger_than_grid() {
        let afm = AfmVector::new(vec![1.0; 4], Shape::new(2, 2, 1)).unwrap();
        assert!(matches!(
            pool(&afm, &spec(PoolMode::Avg, 3, 1)),
            Err(CrlError::InvalidPooling(_))
        ));
        assert!(PoolingSpec::new(PoolMode::Avg, (0, 1), (1, 1)).is_err());
    }

    #[test]
    fn descriptor_round_trip() {
        let sp = PoolingSpec::new(PoolMode::Min, (2, 3), (1, 2)).unwrap();
        assert_eq!(sp.to_string(), "min:2x3:1x2");
        assert_eq!("min:2x3:1x2".parse::<PoolingSpec>().unwrap(), sp);
        assert_eq!(parse_pair("2").unwrap(), (2, 2));
        assert!("avg:2x2".parse::<PoolingSpec>().is_err());
    }
}
