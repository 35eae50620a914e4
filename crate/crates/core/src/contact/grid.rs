use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::net::{BoundingBox, GeoPoint};

use super::ContactError;

/// Equirectangular mapping from the campus bounding box onto a `rows x cols`
/// raster. Row 0 is the northern edge, column 0 the western edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub bbox: BoundingBox,
    pub rows: usize,
    pub cols: usize,
}

impl GridGeometry {
    pub fn new(bbox: BoundingBox, rows: usize, cols: usize) -> Self {
        Self { bbox, rows, cols }
    }

    pub fn cell_of(&self, pos: GeoPoint) -> (usize, usize) {
        let b = &self.bbox;
        let fy = (b.north - pos.lat) / (b.north - b.south);
        let fx = (pos.lon - b.west) / (b.east - b.west);
        let clamp = |f: f64, n: usize| -> usize {
            if !(f > 0.0) {
                0
            } else {
                ((f * n as f64).floor() as usize).min(n - 1)
            }
        };
        (clamp(fy, self.rows), clamp(fx, self.cols))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.cols + col] = v;
    }

    pub fn add(&mut self, (row, col): (usize, usize), v: f64) {
        self.data[row * self.cols + col] += v;
    }

    pub fn mass(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// One step of 4-neighbor diffusion followed by uniform decay. Each cell keeps
    /// `1 - 4 * diffusion` of its mass and sends `diffusion` to each neighbor; a share
    /// aimed past the border reflects back into the cell. `retention` then scales
    /// every cell.
    pub fn diffuse_decay(&mut self, diffusion: f64, retention: f64) -> Result<(), ContactError> {
        if !(0.0..=0.25).contains(&diffusion) {
            return Err(ContactError::Parameter(format!("diffusion {diffusion} outside [0, 1/4]")));
        }
        if !(retention > 0.0 && retention <= 1.0) {
            return Err(ContactError::Parameter(format!("retention {retention} outside (0, 1]")));
        }
        if diffusion == 0.0 {
            for v in &mut self.data {
                *v *= retention;
            }
            return Ok(());
        }
        let (r, c) = (self.rows, self.cols);
        let old = &self.data;
        let mut new = vec![0.0; old.len()];
        for i in 0..r {
            for j in 0..c {
                let here = old[i * c + j];
                let pick = |ni: Option<usize>, nj: Option<usize>| match (ni, nj) {
                    (Some(a), Some(b)) if a < r && b < c => old[a * c + b],
                    _ => here,
                };
                let inflow = pick(i.checked_sub(1), Some(j))
                    + pick(Some(i + 1), Some(j))
                    + pick(Some(i), j.checked_sub(1))
                    + pick(Some(i), Some(j + 1));
                new[i * c + j] = ((1.0 - 4.0 * diffusion) * here + diffusion * inflow) * retention;
            }
        }
        self.data = new;
        Ok(())
    }

    /// `rows` lines of `cols` comma-separated values.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut line = String::new();
        for row in self.data.chunks(self.cols) {
            line.clear();
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// Plain (P2) graymap, values scaled so the grid maximum maps to 65535.
    pub fn write_pgm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "P2\n{} {}\n65535", self.cols, self.rows)?;
        let max = self.max();
        for row in self.data.chunks(self.cols) {
            let line: Vec<String> = row
                .iter()
                .map(|&v| if max > 0.0 { ((v / max) * 65535.0).round() as u32 } else { 0 }.to_string())
                .collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}
