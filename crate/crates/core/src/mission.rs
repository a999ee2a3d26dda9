//! Sampling-mission geometry: core mass vs. auger size, and grid sample plans.

use std::f64::consts::PI;

use thiserror::Error;

use crate::data::Location;

/// Deepest the drill can reach, in millimetres.
pub const MAX_DEPTH_MM: f64 = 243.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("depth must be within 0..={MAX_DEPTH_MM} mm, got {0}")]
    DepthOutOfRange(f64),
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
}

fn positive(name: &'static str, value: f64) -> Result<f64, PlanError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(PlanError::NotPositive { name, value })
    }
}

/// Drill geometry and soil bulk density. Units: g/mm³ and mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrillSpec {
    bulk_density: f64,
    depth: f64,
    auger_diameter: f64,
}

impl DrillSpec {
    pub fn new(bulk_density: f64, depth: f64, auger_diameter: f64) -> Result<Self, PlanError> {
        positive("bulk density", bulk_density)?;
        positive("auger diameter", auger_diameter)?;
        if !(0.0..=MAX_DEPTH_MM).contains(&depth) {
            return Err(PlanError::DepthOutOfRange(depth));
        }
        Ok(Self {
            bulk_density,
            depth,
            auger_diameter,
        })
    }

    pub fn bulk_density(&self) -> f64 {
        self.bulk_density
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    pub fn auger_diameter(&self) -> f64 {
        self.auger_diameter
    }
}

/// Mass in grams of a cylindrical core: `ρ · π · L · (d/2)²`.
pub fn sample_mass(spec: &DrillSpec) -> f64 {
    let r = spec.auger_diameter / 2.0;
    spec.bulk_density * PI * spec.depth * r * r
}

/// Auger diameter (mm) that yields `target_mass` grams at the given density
/// and depth.
pub fn auger_diameter(target_mass: f64, bulk_density: f64, depth: f64) -> Result<f64, PlanError> {
    positive("target mass", target_mass)?;
    positive("bulk density", bulk_density)?;
    positive("depth", depth)?;
    Ok(2.0 * (target_mass / (bulk_density * PI * depth)).sqrt())
}

/// Simple polygon as an open ring of vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Location>,
}

fn cross(o: Location, a: Location, b: Location) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: Location, a: Location, b: Location) -> bool {
    let scale = (b.x - a.x).abs().max((b.y - a.y).abs()).max(1.0);
    cross(a, b, p).abs() <= 1e-9 * scale * scale
        && p.x >= a.x.min(b.x) - 1e-9
        && p.x <= a.x.max(b.x) + 1e-9
        && p.y >= a.y.min(b.y) - 1e-9
        && p.y <= a.y.max(b.y) + 1e-9
}

fn segments_cross(a: Location, b: Location, c: Location, d: Location) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

impl Polygon {
    /// Validates a simple polygon: ≥ 3 finite vertices, non-zero area, no
    /// self-intersections. A repeated closing vertex is dropped.
    pub fn new(mut vertices: Vec<Location>) -> Result<Self, PlanError> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(PlanError::DegeneratePolygon(format!("{} vertices", vertices.len())));
        }
        if vertices.iter().any(|v| !v.is_finite()) {
            return Err(PlanError::DegeneratePolygon("non-finite vertex".into()));
        }
        let poly = Self { vertices };
        if poly.area() <= 0.0 {
            return Err(PlanError::DegeneratePolygon("zero area".into()));
        }
        let n = poly.vertices.len();
        for i in 0..n {
            for j in (i + 1)..n {
                // adjacent edges share a vertex
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a, b) = poly.edge(i);
                let (c, d) = poly.edge(j);
                if segments_cross(a, b, c, d) {
                    return Err(PlanError::DegeneratePolygon(format!("edges {i} and {j} intersect")));
                }
            }
        }
        Ok(poly)
    }

    pub fn rectangle(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self, PlanError> {
        Self::new(vec![
            Location::new(min_x, min_y),
            Location::new(max_x, min_y),
            Location::new(max_x, max_y),
            Location::new(min_x, max_y),
        ])
    }

    pub fn vertices(&self) -> &[Location] {
        &self.vertices
    }

    fn edge(&self, i: usize) -> (Location, Location) {
        (self.vertices[i], self.vertices[(i + 1) % self.vertices.len()])
    }

    /// Absolute shoelace area.
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let (a, b) = self.edge(i);
                a.x * b.y - b.x * a.y
            })
            .sum();
        twice.abs() / 2.0
    }

    pub fn bounding_box(&self) -> (Location, Location) {
        let mut lo = self.vertices[0];
        let mut hi = self.vertices[0];
        for v in &self.vertices {
            lo = Location::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Location::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        (lo, hi)
    }

    pub fn on_boundary(&self, p: Location) -> bool {
        (0..self.vertices.len()).any(|i| {
            let (a, b) = self.edge(i);
            on_segment(p, a, b)
        })
    }

    /// Even-odd rule; points on an edge count as inside.
    pub fn contains(&self, p: Location) -> bool {
        if self.on_boundary(p) {
            return true;
        }
        let mut inside = false;
        for i in 0..self.vertices.len() {
            let (a, b) = self.edge(i);
            if (a.y > p.y) != (b.y > p.y) {
                let x_at = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_at {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| Location::new(v.x + dx, v.y + dy)).collect(),
        }
    }
}

/// Field outline plus zones that must not be sampled (trees, buildings, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldBoundary {
    pub boundary: Polygon,
    pub exclusions: Vec<Polygon>,
}

impl FieldBoundary {
    pub fn new(boundary: Polygon, exclusions: Vec<Polygon>) -> Self {
        Self { boundary, exclusions }
    }

    /// Inside the boundary (edges included) and outside every exclusion
    /// (exclusion edges excluded).
    pub fn admits(&self, p: Location) -> bool {
        self.boundary.contains(p) && !self.exclusions.iter().any(|z| z.contains(p))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub locations: Vec<Location>,
    pub spacing: f64,
}

impl SamplePlan {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// Sample ids `S01, S02, ...` in plan order.
    pub fn sample_ids(&self) -> Vec<String> {
        let width = self.locations.len().to_string().len().max(2);
        (1..=self.locations.len()).map(|i| format!("S{i:0width$}")).collect()
    }
}

/// Square lattice with step `spacing`, centered in the boundary's bounding
/// box, filtered by [`FieldBoundary::admits`]. Rows run south to north;
/// alternate rows are reversed so consecutive samples stay adjacent.
pub fn grid_plan(field: &FieldBoundary, spacing: f64) -> Result<SamplePlan, PlanError> {
    positive("spacing", spacing)?;
    let (lo, hi) = field.boundary.bounding_box();
    let steps = |extent: f64| (extent / spacing + 1e-9).floor() as usize;
    let (nx, ny) = (steps(hi.x - lo.x), steps(hi.y - lo.y));
    let x0 = lo.x + ((hi.x - lo.x) - nx as f64 * spacing) / 2.0;
    let y0 = lo.y + ((hi.y - lo.y) - ny as f64 * spacing) / 2.0;

    let mut locations = Vec::new();
    for row in 0..=ny {
        let y = y0 + row as f64 * spacing;
        let mut line: Vec<Location> = (0..=nx)
            .map(|col| Location::new(x0 + col as f64 * spacing, y))
            .filter(|&p| field.admits(p))
            .collect();
        if row % 2 == 1 {
            line.reverse();
        }
        locations.extend(line);
    }
    Ok(SamplePlan { locations, spacing })
}
