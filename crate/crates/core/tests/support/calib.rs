use docmine_core::geom::{BBox, Point};
use docmine_core::map::{Axis, GridLine, LineSource, MapArtifact, MapStage, DEFAULT_RESIDUAL_TOLERANCE};
use docmine_core::time::Timestamp;
use rand::Rng as _;

use super::Rng;

/// Least-squares line through `(x, y)` samples from the normal equations,
/// solved by Cramer's rule on raw sums.
pub fn closed_form(samples: &[(f64, f64)]) -> (f64, f64) {
    let n = samples.len() as f64;
    let sx: f64 = samples.iter().map(|s| s.0).sum();
    let sy: f64 = samples.iter().map(|s| s.1).sum();
    let sxx: f64 = samples.iter().map(|s| s.0 * s.0).sum();
    let sxy: f64 = samples.iter().map(|s| s.0 * s.1).sum();
    let det = n * sxx - sx * sx;
    ((n * sxy - sx * sy) / det, (sy * sxx - sx * sxy) / det)
}

/// Ground truth for one synthetic map: `value = slope * pixel + intercept`
/// per axis over a `width` x `height` region.
#[derive(Debug, Clone)]
pub struct SyntheticMap {
    pub width: f64,
    pub height: f64,
    pub lon: (f64, f64),
    pub lat: (f64, f64),
}

impl SyntheticMap {
    pub fn random(rng: &mut Rng) -> Self {
        let width = rng.random_range(150.0..600.0);
        let height = rng.random_range(150.0..600.0);
        let lon_span = rng.random_range(0.5..60.0);
        let west = rng.random_range(-175.0..(175.0 - lon_span));
        let lat_span = rng.random_range(0.5..40.0);
        let north = rng.random_range((lat_span - 85.0)..85.0);
        Self { width, height, lon: (lon_span / width, west), lat: (-lat_span / height, north) }
    }

    pub fn span(&self, axis: Axis) -> f64 {
        match axis {
            Axis::Longitude => (self.lon.0 * self.width).abs(),
            Axis::Latitude => (self.lat.0 * self.height).abs(),
        }
    }

    pub fn truth(&self, pixel: Point) -> (f64, f64) {
        (self.lat.0 * pixel.y + self.lat.1, self.lon.0 * pixel.x + self.lon.1)
    }

    /// 2 to 6 lines per axis, one per equal slice of the extent. `noise` is
    /// the largest value error as a fraction of the axis span.
    pub fn gridlines(&self, rng: &mut Rng, noise: f64) -> Vec<GridLine> {
        let mut out = Vec::new();
        for axis in [Axis::Longitude, Axis::Latitude] {
            let (extent, (a, b)) = match axis {
                Axis::Longitude => (self.width, self.lon),
                Axis::Latitude => (self.height, self.lat),
            };
            let k = rng.random_range(2..=6);
            for i in 0..k {
                let pos = (i as f64 + rng.random_range(0.25..0.75)) * extent / k as f64;
                let jitter = if noise > 0.0 { rng.random_range(-noise..noise) * self.span(axis) } else { 0.0 };
                out.push(GridLine { axis, pixel_pos: pos, value: a * pos + b + jitter, source: LineSource::Manual });
            }
        }
        out
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Stats {
    /// Largest |coefficient - oracle| over both axes.
    pub coefficient_error: f64,
    /// Largest |recovered - truth| as a fraction of the axis span.
    pub relative_error: f64,
    /// Largest |recovered - truth| in degrees.
    pub absolute_error: f64,
    pub points: usize,
}

impl Stats {
    pub fn merge(&mut self, o: Stats) {
        self.coefficient_error = self.coefficient_error.max(o.coefficient_error);
        self.relative_error = self.relative_error.max(o.relative_error);
        self.absolute_error = self.absolute_error.max(o.absolute_error);
        self.points += o.points;
    }
}

/// Runs one map through the artifact pipeline and marks `points` random
/// pixels.
pub fn run_map(m: &SyntheticMap, lines: Vec<GridLine>, rng: &mut Rng, points: usize) -> Result<Stats, String> {
    let t = Timestamp(0);
    let region = BBox::new(10.0, 10.0, 10.0 + m.width, 10.0 + m.height);
    let page = BBox::new(0.0, 0.0, m.width + 20.0, m.height + 20.0);
    let mut art = MapArtifact::detected("m", "d", 0, region, t);
    let e = |e: docmine_core::CoreError| e.to_string();
    art.confirm_region(region, &page, t).map_err(e)?;
    art.propose_gridlines(lines.clone(), t).map_err(e)?;
    let cal = art.confirm_grid(DEFAULT_RESIDUAL_TOLERANCE, t).map_err(e)?;
    art.confirm_calibration(t).map_err(e)?;
    if art.stage != MapStage::Marking {
        return Err(format!("stage {:?}", art.stage));
    }
    let mut stats = Stats::default();
    for (axis, fit) in [(Axis::Longitude, cal.longitude), (Axis::Latitude, cal.latitude)] {
        let fit = fit.ok_or("axis not fit")?;
        let samples: Vec<(f64, f64)> = lines.iter().filter(|l| l.axis == axis).map(|l| (l.pixel_pos, l.value)).collect();
        let (slope, intercept) = closed_form(&samples);
        stats.coefficient_error = stats.coefficient_error.max((fit.slope - slope).abs()).max((fit.intercept - intercept).abs());
    }
    for _ in 0..points {
        let pixel = Point::new(rng.random_range(0.0..m.width), rng.random_range(0.0..m.height));
        let p = art.mark_point(pixel, t).map_err(e)?;
        let (lat, lon) = m.truth(pixel);
        for (got, want, axis) in [(p.latitude, lat, Axis::Latitude), (p.longitude, lon, Axis::Longitude)] {
            let err = (got - want).abs();
            stats.absolute_error = stats.absolute_error.max(err);
            stats.relative_error = stats.relative_error.max(err / m.span(axis));
        }
        stats.points += 1;
    }
    Ok(stats)
}
