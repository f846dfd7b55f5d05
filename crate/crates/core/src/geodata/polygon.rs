use serde::{Deserialize, Serialize};

use super::{GeodataError, Result};

/// Axis-aligned rectangle in CRS units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self { min_x, min_y, max_x, max_y }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    pub fn is_empty(&self) -> bool {
        !(self.min_x <= self.max_x && self.min_y <= self.max_y)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn to_polygon(&self) -> Polygon {
        let (a, b, c, d) = (self.min_x, self.min_y, self.max_x, self.max_y);
        Polygon { exterior: vec![(a, b), (c, b), (c, d), (a, d), (a, b)], interiors: vec![] }
    }
}

/// Polygon with optional holes. Rings are closed (first vertex repeated
/// last) and have at least four vertices. Self-intersection is not checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    exterior: Vec<(f64, f64)>,
    #[serde(default)]
    interiors: Vec<Vec<(f64, f64)>>,
}

fn check_ring(ring: &[(f64, f64)], which: &str) -> Result<()> {
    if ring.len() < 4 {
        return Err(GeodataError::InvalidPolygon(format!("{which} ring has {} vertices (minimum 4)", ring.len())));
    }
    if ring.first() != ring.last() {
        return Err(GeodataError::InvalidPolygon(format!("{which} ring is not closed")));
    }
    if ring.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(GeodataError::InvalidPolygon(format!("{which} ring has a non-finite vertex")));
    }
    Ok(())
}

impl Polygon {
    pub fn new(exterior: Vec<(f64, f64)>, interiors: Vec<Vec<(f64, f64)>>) -> Result<Self> {
        check_ring(&exterior, "exterior")?;
        for r in &interiors {
            check_ring(r, "interior")?;
        }
        Ok(Self { exterior, interiors })
    }

    pub fn exterior(&self) -> &[(f64, f64)] {
        &self.exterior
    }

    pub fn interiors(&self) -> &[Vec<(f64, f64)>] {
        &self.interiors
    }

    pub fn bounds(&self) -> Bounds {
        self.exterior.iter().fold(
            Bounds::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |b, &(x, y)| Bounds::new(b.min_x.min(x), b.min_y.min(y), b.max_x.max(x), b.max_y.max(y)),
        )
    }

    fn rings(&self) -> impl Iterator<Item = &[(f64, f64)]> {
        std::iter::once(self.exterior.as_slice()).chain(self.interiors.iter().map(Vec::as_slice))
    }

    /// Even-odd membership over all rings; a point lying on any edge counts
    /// as inside.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        for ring in self.rings() {
            for seg in ring.windows(2) {
                let ((x1, y1), (x2, y2)) = (seg[0], seg[1]);
                if on_segment(x, y, x1, y1, x2, y2) {
                    return true;
                }
                if (y1 > y) != (y2 > y) {
                    let x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1);
                    if x < x_cross {
                        inside = !inside;
                    }
                }
            }
        }
        inside
    }
}

fn on_segment(px: f64, py: f64, x1: f64, y1: f64, x2: f64, y2: f64) -> bool {
    let cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1);
    let scale = (x2 - x1).abs().max((y2 - y1).abs()).max(1.0);
    if cross.abs() > 1e-12 * scale * scale {
        return false;
    }
    px >= x1.min(x2) && px <= x1.max(x2) && py >= y1.min(y2) && py <= y1.max(y2)
}

/// Clip region: a rectangle or a polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Bbox(Bounds),
    Polygon(Polygon),
}

impl Region {
    pub fn bounds(&self) -> Bounds {
        match self {
            Region::Bbox(b) => *b,
            Region::Polygon(p) => p.bounds(),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Region::Bbox(b) => b.contains(x, y),
            Region::Polygon(p) => p.contains(x, y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_with_hole() -> Polygon {
        Polygon::new(
            vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.0, 0.0)],
            vec![vec![(0.25, 0.25), (0.75, 0.25), (0.75, 0.75), (0.25, 0.75), (0.25, 0.25)]],
        )
        .unwrap()
    }

    #[test]
    fn holes_and_edges() {
        let p = square_with_hole();
        assert!(p.contains(0.1, 0.1));
        assert!(!p.contains(0.5, 0.5));
        assert!(!p.contains(1.5, 0.5));
        assert!(!p.contains(1.0 + 1e-9, 1.0 + 1e-9));
        // boundary ties count as inside, including hole edges and vertices
        assert!(p.contains(1.0, 0.5));
        assert!(p.contains(0.0, 0.0));
        assert!(p.contains(0.25, 0.5));
    }

    #[test]
    fn ring_validation() {
        assert!(Polygon::new(vec![(0.0, 0.0), (1.0, 0.0), (0.0, 0.0)], vec![]).is_err());
        assert!(Polygon::new(vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)], vec![]).is_err());
    }

    #[test]
    fn triangle() {
        let t = Polygon::new(vec![(0.0, 0.0), (10.0, 0.0), (0.0, 10.0), (0.0, 0.0)], vec![]).unwrap();
        assert!(t.contains(4.9, 5.0));
        assert!(t.contains(5.0, 5.0));
        assert!(!t.contains(5.1, 5.0));
        assert_eq!(t.bounds(), Bounds::new(0.0, 0.0, 10.0, 10.0));
    }
}
