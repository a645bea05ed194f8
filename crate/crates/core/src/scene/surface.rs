//! Procedural tissue heightfields.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Heightfield;
use crate::seed::stream_rng;

/// Parameters of the procedural phantom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceConfig {
    /// Phantom footprint in x and y (meters).
    pub extent: [f64; 2],
    /// Phantom centre in the left-camera x-y plane (meters).
    pub center: [f64; 2],
    /// Depth of the base plane (meters).
    pub base_depth: f64,
    /// Grid cells along x and y.
    pub grid_cells: [u32; 2],
    /// Inclusive range for the number of Gaussian bumps.
    pub bump_count: [u32; 2],
    pub sigma_range: [f64; 2],
    pub amplitude_range: [f64; 2],
    /// Heights never exceed `base_depth + max_height`.
    pub max_height: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            extent: [0.30, 0.21],
            center: [0.0, 0.0],
            base_depth: 0.18,
            grid_cells: [160, 112],
            bump_count: [3, 8],
            sigma_range: [0.015, 0.05],
            amplitude_range: [0.005, 0.04],
            max_height: 0.08,
        }
    }
}

impl SurfaceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("surface config: {m}")));
        if self.grid_cells[0] < 64 || self.grid_cells[1] < 64 {
            return bad("grid resolution must be at least 64x64 cells");
        }
        if !(self.extent[0] > 0.0 && self.extent[1] > 0.0) {
            return bad("extent must be positive");
        }
        if !(self.base_depth > 0.0) {
            return bad("base depth must be positive");
        }
        if self.bump_count[0] > self.bump_count[1] {
            return bad("bump count range is reversed");
        }
        if !(self.sigma_range[0] > 0.0 && self.sigma_range[0] <= self.sigma_range[1]) {
            return bad("bump sigma must be positive");
        }
        if !(self.amplitude_range[0] >= 0.0 && self.amplitude_range[0] <= self.amplitude_range[1]) {
            return bad("amplitude range invalid");
        }
        if !(self.max_height > 0.0) {
            return bad("max height must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    /// Centre in phantom coordinates (relative to the phantom centre).
    pub center: [f64; 2],
    pub sigma: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Wave {
    k: [f64; 2],
    phase: f64,
}

/// The phantom before it is placed on the rotation stage: bump list plus
/// albedo waves. Rasterizing at a stage angle gives a [`TissueSurface`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub config: SurfaceConfig,
    pub bumps: Vec<Bump>,
    waves: Vec<Wave>,
}

impl PhantomSpec {
    pub fn generate(seed: u64, config: &SurfaceConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, "surface", &[]);
        let k = rng.gen_range(config.bump_count[0]..=config.bump_count[1]);
        let [w, h] = config.extent;
        let bumps = (0..k)
            .map(|_| Bump {
                center: [
                    rng.gen_range(-0.5 * w..=0.5 * w),
                    rng.gen_range(-0.5 * h..=0.5 * h),
                ],
                sigma: rng.gen_range(config.sigma_range[0]..=config.sigma_range[1]),
                amplitude: rng.gen_range(config.amplitude_range[0]..=config.amplitude_range[1]),
            })
            .collect();
        // spatial periods between ~4 and ~15 cm
        let waves = (0..6)
            .map(|_| {
                let freq = rng.gen_range(40.0..160.0);
                let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                Wave {
                    k: [freq * angle.cos(), freq * angle.sin()],
                    phase: rng.gen_range(0.0..std::f64::consts::TAU),
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            bumps,
            waves,
        })
    }

    /// Height offset above the base plane at phantom coordinates `q`.
    fn relief(&self, q: [f64; 2]) -> f64 {
        let sum: f64 = self
            .bumps
            .iter()
            .map(|b| {
                let dx = q[0] - b.center[0];
                let dy = q[1] - b.center[1];
                b.amplitude * (-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma)).exp()
            })
            .sum();
        // soft saturation keeps overlapping bumps below the phantom height
        let cap = self.config.max_height;
        cap * (sum / cap).tanh()
    }

    fn albedo(&self, q: [f64; 2]) -> [u8; 3] {
        let wave = |w: &Wave| (w.k[0] * q[0] + w.k[1] * q[1] + w.phase).sin();
        let a = self.waves[..3].iter().map(wave).sum::<f64>() / 3.0;
        let b = self.waves[3..].iter().map(wave).sum::<f64>() / 3.0;
        let r = 165.0 + 55.0 * a;
        let g = 70.0 + 30.0 * b + 10.0 * a;
        let bl = 60.0 + 25.0 * b;
        [r as u8, g as u8, bl as u8]
    }

    /// Samples the phantom rotated by `angle` (radians, counter-clockwise in
    /// the image-plane x-y axes) about its centre.
    pub fn rasterize(&self, angle: f64) -> TissueSurface {
        let cfg = &self.config;
        let [cells_x, cells_y] = cfg.grid_cells;
        let nx = cells_x as usize + 1;
        let ny = cells_y as usize + 1;
        let dx = cfg.extent[0] / f64::from(cells_x);
        let dy = cfg.extent[1] / f64::from(cells_y);
        let half = [0.5 * cfg.extent[0], 0.5 * cfg.extent[1]];
        let (s, c) = angle.sin_cos();
        // world offset from centre -> phantom coordinates (inverse rotation)
        let to_phantom = |ox: f64, oy: f64| [c * ox + s * oy, -s * ox + c * oy];
        // node offsets computed symmetrically so node i and node n-1-i mirror exactly
        let offset = |i: usize, n: usize, d: f64, half: f64| {
            if 2 * i < n - 1 {
                -half + i as f64 * d
            } else {
                half - (n - 1 - i) as f64 * d
            }
        };

        let mut heights = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let oy = offset(j, ny, dy, half[1]);
            for i in 0..nx {
                let ox = offset(i, nx, dx, half[0]);
                heights.push(cfg.base_depth + self.relief(to_phantom(ox, oy)));
            }
        }
        let mut albedo = Vec::with_capacity((nx - 1) * (ny - 1));
        for j in 0..ny - 1 {
            let oy = -half[1] + (j as f64 + 0.5) * dy;
            for i in 0..nx - 1 {
                let ox = -half[0] + (i as f64 + 0.5) * dx;
                albedo.push(self.albedo(to_phantom(ox, oy)));
            }
        }
        let z_min = heights.iter().copied().fold(f64::INFINITY, f64::min);
        let z_max = heights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let slope = node_slopes(&heights, nx, ny, dx, dy);
        TissueSurface {
            x_min: cfg.center[0] - half[0],
            y_min: cfg.center[1] - half[1],
            dx,
            dy,
            nx,
            ny,
            heights,
            albedo,
            z_range: [z_min, z_max],
            slope,
        }
    }
}

/// Bilinear heightfield with per-cell albedo.
#[derive(Debug, Clone, PartialEq)]
pub struct TissueSurface {
    pub x_min: f64,
    pub y_min: f64,
    pub dx: f64,
    pub dy: f64,
    /// Node counts (cells + 1).
    pub nx: usize,
    pub ny: usize,
    heights: Vec<f64>,
    /// Row-major per-cell RGB.
    pub albedo: Vec<[u8; 3]>,
    z_range: [f64; 2],
    slope: [f64; 2],
}

/// Largest node-to-node height change per unit length along x and y. These
/// bound the gradient of the bilinear interpolant everywhere.
fn node_slopes(heights: &[f64], nx: usize, ny: usize, dx: f64, dy: f64) -> [f64; 2] {
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for j in 0..ny {
        for i in 0..nx {
            let h = heights[j * nx + i];
            if i + 1 < nx {
                sx = sx.max((heights[j * nx + i + 1] - h).abs() / dx);
            }
            if j + 1 < ny {
                sy = sy.max((heights[(j + 1) * nx + i] - h).abs() / dy);
            }
        }
    }
    [sx, sy]
}

/// Deterministic phantom for `seed`, unrotated.
pub fn make_surface(seed: u64, config: &SurfaceConfig) -> Result<TissueSurface> {
    Ok(PhantomSpec::generate(seed, config)?.rasterize(0.0))
}

impl TissueSurface {
    /// A flat plane at depth `z`, mostly for tests and examples.
    pub fn flat(z: f64, x_range: [f64; 2], y_range: [f64; 2], cells: [usize; 2]) -> Self {
        let nx = cells[0] + 1;
        let ny = cells[1] + 1;
        Self {
            x_min: x_range[0],
            y_min: y_range[0],
            dx: (x_range[1] - x_range[0]) / cells[0] as f64,
            dy: (y_range[1] - y_range[0]) / cells[1] as f64,
            nx,
            ny,
            heights: vec![z; nx * ny],
            albedo: vec![[180, 90, 80]; cells[0] * cells[1]],
            z_range: [z, z],
            slope: [0.0, 0.0],
        }
    }

    /// Row-major node heights, `ny` rows of `nx`.
    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn node(&self, i: usize, j: usize) -> f64 {
        self.heights[j * self.nx + i]
    }

    /// Cell index and fractional offsets for (x, y), or `None` outside.
    fn locate(&self, x: f64, y: f64) -> Option<(usize, usize, f64, f64)> {
        let fx = (x - self.x_min) / self.dx;
        let fy = (y - self.y_min) / self.dy;
        let max_x = (self.nx - 1) as f64;
        let max_y = (self.ny - 1) as f64;
        if !(fx >= 0.0 && fy >= 0.0 && fx <= max_x && fy <= max_y) {
            return None;
        }
        let i = (fx.floor() as usize).min(self.nx - 2);
        let j = (fy.floor() as usize).min(self.ny - 2);
        Some((i, j, fx - i as f64, fy - j as f64))
    }

    /// Height gradient `[dh/dx, dh/dy]` of the bilinear interpolant.
    pub fn gradient_at(&self, x: f64, y: f64) -> Option<[f64; 2]> {
        let (i, j, u, v) = self.locate(x, y)?;
        let h00 = self.node(i, j);
        let h10 = self.node(i + 1, j);
        let h01 = self.node(i, j + 1);
        let h11 = self.node(i + 1, j + 1);
        let dhdu = (1.0 - v) * (h10 - h00) + v * (h11 - h01);
        let dhdv = (1.0 - u) * (h01 - h00) + u * (h11 - h10);
        Some([dhdu / self.dx, dhdv / self.dy])
    }

    pub fn albedo_at(&self, x: f64, y: f64) -> Option<[u8; 3]> {
        let (i, j, _, _) = self.locate(x, y)?;
        Some(self.albedo[j * (self.nx - 1) + i])
    }

    /// Domain centre in the camera x-y plane.
    pub fn center(&self) -> [f64; 2] {
        [
            self.x_min + 0.5 * self.dx * (self.nx - 1) as f64,
            self.y_min + 0.5 * self.dy * (self.ny - 1) as f64,
        ]
    }
}

impl Heightfield for TissueSurface {
    fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        let (i, j, u, v) = self.locate(x, y)?;
        let h00 = self.node(i, j);
        let h10 = self.node(i + 1, j);
        let h01 = self.node(i, j + 1);
        let h11 = self.node(i + 1, j + 1);
        Some((1.0 - v) * ((1.0 - u) * h00 + u * h10) + v * ((1.0 - u) * h01 + u * h11))
    }

    fn domain(&self) -> [f64; 4] {
        [
            self.x_min,
            self.x_min + self.dx * (self.nx - 1) as f64,
            self.y_min,
            self.y_min + self.dy * (self.ny - 1) as f64,
        ]
    }

    fn height_range(&self) -> [f64; 2] {
        self.z_range
    }

    fn cell_size(&self) -> f64 {
        self.dx.min(self.dy)
    }

    fn max_slope(&self) -> Option<[f64; 2]> {
        Some(self.slope)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_bumps_is_flat() {
        let cfg = SurfaceConfig {
            bump_count: [0, 0],
            ..Default::default()
        };
        let s = make_surface(3, &cfg).unwrap();
        assert!(s.heights().iter().all(|&h| h == cfg.base_depth));
        assert_eq!(s.height_range(), [cfg.base_depth, cfg.base_depth]);
    }

    #[test]
    fn same_seed_same_surface() {
        let cfg = SurfaceConfig::default();
        let a = make_surface(11, &cfg).unwrap();
        let b = make_surface(11, &cfg).unwrap();
        assert_eq!(a, b);
        let c = make_surface(12, &cfg).unwrap();
        assert_ne!(a.heights(), c.heights());
    }

    #[test]
    fn extent_matches_phantom() {
        let s = make_surface(0, &SurfaceConfig::default()).unwrap();
        let [x0, x1, y0, y1] = s.domain();
        assert!((x1 - x0 - 0.30).abs() < 1e-12);
        assert!((y1 - y0 - 0.21).abs() < 1e-12);
    }

    #[test]
    fn coarse_grid_rejected() {
        let cfg = SurfaceConfig {
            grid_cells: [32, 128],
            ..Default::default()
        };
        assert!(make_surface(0, &cfg).is_err());
        let cfg = SurfaceConfig {
            sigma_range: [0.0, 0.01],
            ..Default::default()
        };
        assert!(make_surface(0, &cfg).is_err());
    }

    #[test]
    fn bilinear_reproduces_nodes() {
        let s = make_surface(5, &SurfaceConfig::default()).unwrap();
        for (i, j) in [(0, 0), (10, 20), (s.nx - 1, s.ny - 1), (7, s.ny - 1)] {
            let x = s.x_min + i as f64 * s.dx;
            let y = s.y_min + j as f64 * s.dy;
            let h = s.height_at(x, y).unwrap();
            assert!((h - s.node(i, j)).abs() < 1e-12);
        }
        assert!(s.height_at(s.x_min - 1e-3, 0.0).is_none());
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let s = make_surface(9, &SurfaceConfig::default()).unwrap();
        let (x, y) = (0.0123, -0.0311);
        let g = s.gradient_at(x, y).unwrap();
        let h = 1e-7;
        let gx = (s.height_at(x + h, y).unwrap() - s.height_at(x - h, y).unwrap()) / (2.0 * h);
        let gy = (s.height_at(x, y + h).unwrap() - s.height_at(x, y - h).unwrap()) / (2.0 * h);
        assert!((g[0] - gx).abs() < 1e-6);
        assert!((g[1] - gy).abs() < 1e-6);
    }
}
