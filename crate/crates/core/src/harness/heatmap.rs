use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::sparsity::LayerMask;

use super::io::write_atomic;

fn resolve_side(n_in: usize, side: Option<usize>) -> Result<usize> {
    let side = match side {
        Some(s) => s,
        None => {
            let s = (n_in as f64).sqrt().round() as usize;
            if s * s != n_in {
                return Err(Error::invalid_arg(format!(
                    "{n_in} inputs are not a square image; pass the side explicitly"
                )));
            }
            s
        }
    };
    if side == 0 || side * side != n_in {
        return Err(Error::invalid_arg(format!("side {side} does not tile {n_in} inputs")));
    }
    Ok(side)
}

/// Number of neurons reading each input pixel.
pub fn connectivity_heatmap(mask: &LayerMask, side: Option<usize>) -> Result<Array2<f64>> {
    let side = resolve_side(mask.n_in(), side)?;
    let counts: Vec<f64> = mask.input_counts().into_iter().map(|c| c as f64).collect();
    Ok(Array2::from_shape_vec((side, side), counts).expect("side checked"))
}

/// Mean absolute weight of each input row of an `n_in × n_out` matrix.
pub fn weight_heatmap(weights: &Array2<f64>, side: Option<usize>) -> Result<Array2<f64>> {
    let side = resolve_side(weights.nrows(), side)?;
    let mean = weights.mapv(f64::abs).mean_axis(Axis(1)).ok_or_else(|| Error::invalid_arg("weight matrix has no columns"))?;
    Ok(mean.into_shape_with_order((side, side)).expect("side checked"))
}

fn window_bounds(side: usize, window: usize) -> Result<(usize, usize)> {
    if window == 0 || window >= side {
        return Err(Error::invalid_arg(format!("window {window} must lie in 1..{side}")));
    }
    let lo = (side - window) / 2;
    Ok((lo, lo + window))
}

fn split_window(grid: &Array2<f64>, window: usize) -> Result<((f64, usize), (f64, usize))> {
    let (side, cols) = grid.dim();
    if side != cols {
        return Err(Error::invalid_arg("grid must be square"));
    }
    let (lo, hi) = window_bounds(side, window)?;
    let (mut inside, mut ni, mut outside, mut no) = (0.0, 0, 0.0, 0);
    for ((r, c), &v) in grid.indexed_iter() {
        if (lo..hi).contains(&r) && (lo..hi).contains(&c) {
            inside += v;
            ni += 1;
        } else {
            outside += v;
            no += 1;
        }
    }
    Ok(((inside, ni), (outside, no)))
}

/// Mean of the centred `window × window` block over the mean of the rest.
pub fn locality_ratio(grid: &Array2<f64>, window: usize) -> Result<f64> {
    let ((inside, ni), (outside, no)) = split_window(grid, window)?;
    Ok((inside / ni as f64) / (outside / no as f64))
}

/// Share of the grid total that falls inside the centred window.
pub fn window_share(grid: &Array2<f64>, window: usize) -> Result<f64> {
    let ((inside, _), (outside, _)) = split_window(grid, window)?;
    Ok(inside / (inside + outside))
}

pub fn write_grid_csv(grid: &Array2<f64>, path: &Path) -> Result<()> {
    let mut s = String::new();
    for row in grid.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(s, "{}", cells.join(",")).unwrap();
    }
    write_atomic(path, s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::RngStream;
    use crate::sparsity::init_random_mask;

    #[test]
    fn uniform_weights_give_uniform_grid() {
        let w = Array2::from_elem((784, 256), -0.3);
        let g = weight_heatmap(&w, None).unwrap();
        assert_eq!(g.dim(), (28, 28));
        assert!(g.iter().all(|&v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn random_mask_counts_sum_to_total_fanin() {
        let m = init_random_mask(784, 256, 6, &mut RngStream::new(8)).unwrap();
        let g = connectivity_heatmap(&m, Some(28)).unwrap();
        assert_eq!(g.sum(), 1536.0);
    }

    #[test]
    fn non_square_needs_side() {
        let m = init_random_mask(10, 2, 2, &mut RngStream::new(8)).unwrap();
        assert!(matches!(connectivity_heatmap(&m, None), Err(Error::InvalidArgument(_))));
        assert!(connectivity_heatmap(&m, Some(3)).is_err());
    }

    #[test]
    fn window_statistics() {
        let mut g = Array2::from_elem((4, 4), 1.0);
        g[[1, 1]] = 3.0;
        g[[1, 2]] = 3.0;
        g[[2, 1]] = 3.0;
        g[[2, 2]] = 3.0;
        assert_eq!(locality_ratio(&g, 2).unwrap(), 3.0);
        assert_eq!(window_share(&g, 2).unwrap(), 12.0 / 24.0);
        assert!(locality_ratio(&g, 4).is_err());
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        write_grid_csv(&Array2::from_shape_vec((2, 2), vec![1.0, 2.5, 0.0, 4.0]).unwrap(), &p).unwrap();
        assert_eq!(std::fs::read_to_string(p).unwrap(), "1,2.5\n0,4\n");
    }
}
