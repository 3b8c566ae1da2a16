use super::GRID_SIZE;
use crate::error::{Error, Result};
use crate::framing::{ROI_HEIGHT, ROI_WIDTH};

pub const NOT_VISIBLE_CLASS: usize = GRID_SIZE * GRID_SIZE;

/// 24x24 cells over the ROI plus one "pupil not visible" class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub cells: usize,
    pub roi_width: f64,
    pub roi_height: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            cells: GRID_SIZE,
            roi_width: ROI_WIDTH as f64,
            roi_height: ROI_HEIGHT as f64,
        }
    }
}

impl GridSpec {
    pub fn cell_width(&self) -> f64 {
        self.roi_width / self.cells as f64
    }

    pub fn cell_height(&self) -> f64 {
        self.roi_height / self.cells as f64
    }

    pub fn not_visible(&self) -> usize {
        self.cells * self.cells
    }

    pub fn classes(&self) -> usize {
        self.cells * self.cells + 1
    }
}

pub fn label_to_cell(x: f64, y: f64, visible: bool, grid: &GridSpec) -> Result<usize> {
    if !visible {
        return Ok(grid.not_visible());
    }
    if !(x >= 0.0 && y >= 0.0 && x < grid.roi_width && y < grid.roi_height) {
        return Err(Error::InvalidParam(format!(
            "visible label ({x}, {y}) outside the {}x{} ROI",
            grid.roi_width, grid.roi_height
        )));
    }
    let n = grid.cells;
    let cx = ((x * n as f64 / grid.roi_width).floor() as usize).min(n - 1);
    let cy = ((y * n as f64 / grid.roi_height).floor() as usize).min(n - 1);
    Ok(cy * n + cx)
}

/// Cell center in ROI pixels; `None` for the not-visible class.
pub fn cell_to_center(index: usize, grid: &GridSpec) -> Result<Option<(f64, f64)>> {
    if index > grid.not_visible() {
        return Err(Error::InvalidParam(format!("class index {index} out of range")));
    }
    if index == grid.not_visible() {
        return Ok(None);
    }
    let (cx, cy) = (index % grid.cells, index / grid.cells);
    Ok(Some((
        (cx as f64 + 0.5) * grid.cell_width(),
        (cy as f64 + 0.5) * grid.cell_height(),
    )))
}
