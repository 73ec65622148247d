//! Square boundaries and point containment.
//!
//! All predicates run on the fixed-point 1e-7 degree grid with exact integer
//! arithmetic, so on-edge decisions do not depend on float rounding.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::GeoPosition;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon vertices are all collinear")]
    Degenerate,
    #[error("polygon has a zero-length edge at vertex {0}")]
    RepeatedVertex(usize),
    #[error("polygon edges {0} and {1} intersect")]
    SelfIntersecting(usize, usize),
    #[error("point has no position fix")]
    NoFix,
}

/// A public square, delimited by a simple polygon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SquareDefinition {
    pub id: String,
    pub name: String,
    /// Vertices in order; serialized as `[latitude_deg, longitude_deg]` pairs.
    #[serde(with = "vertex_degrees")]
    pub boundary: Vec<GeoPosition>,
}

type Pt = (i128, i128);

fn pt(p: &GeoPosition) -> Pt {
    (p.longitude_e7 as i128, p.latitude_e7 as i128)
}

fn cross(o: Pt, a: Pt, b: Pt) -> i128 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn on_segment(p: Pt, a: Pt, b: Pt) -> bool {
    cross(a, b, p) == 0
        && p.0 >= a.0.min(b.0)
        && p.0 <= a.0.max(b.0)
        && p.1 >= a.1.min(b.1)
        && p.1 <= a.1.max(b.1)
}

fn segments_touch(a: Pt, b: Pt, c: Pt, d: Pt) -> bool {
    let d1 = cross(c, d, a).signum();
    let d2 = cross(c, d, b).signum();
    let d3 = cross(a, b, c).signum();
    let d4 = cross(a, b, d).signum();
    if d1 * d2 < 0 && d3 * d4 < 0 {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

impl SquareDefinition {
    pub fn new(id: impl Into<String>, name: impl Into<String>, boundary: Vec<GeoPosition>) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            boundary,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let pts: Vec<Pt> = self.boundary.iter().map(pt).collect();
        let n = pts.len();
        if n < 3 {
            return Err(GeometryError::TooFewVertices(n));
        }
        for i in 0..n {
            if pts[i] == pts[(i + 1) % n] {
                return Err(GeometryError::RepeatedVertex(i));
            }
        }
        if (2..n).all(|i| cross(pts[0], pts[1], pts[i]) == 0) {
            return Err(GeometryError::Degenerate);
        }
        for i in 0..n {
            for j in i + 1..n {
                // adjacent edges share a vertex by construction
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                if segments_touch(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                    return Err(GeometryError::SelfIntersecting(i, j));
                }
            }
        }
        Ok(())
    }

    /// Mean of the vertices; inside for convex boundaries.
    pub fn vertex_centroid(&self) -> GeoPosition {
        let n = self.boundary.len().max(1) as i64;
        let lat: i64 = self.boundary.iter().map(|v| v.latitude_e7 as i64).sum();
        let lon: i64 = self.boundary.iter().map(|v| v.longitude_e7 as i64).sum();
        GeoPosition::new((lat / n) as i32, (lon / n) as i32, 0, 0)
    }
}

/// Ray-casting containment test; points on an edge or vertex count as inside.
pub fn point_in_square(p: &GeoPosition, sq: &SquareDefinition) -> Result<bool, GeometryError> {
    if !p.has_fix() {
        return Err(GeometryError::NoFix);
    }
    sq.validate()?;
    Ok(contains(p, &sq.boundary))
}

/// Containment without validating the polygon.
pub(crate) fn contains(p: &GeoPosition, boundary: &[GeoPosition]) -> bool {
    let q = pt(p);
    let n = boundary.len();
    let mut inside = false;
    for i in 0..n {
        let a = pt(&boundary[i]);
        let b = pt(&boundary[(i + 1) % n]);
        if on_segment(q, a, b) {
            return true;
        }
        if (a.1 > q.1) != (b.1 > q.1) {
            // crossing lies right of q iff q is on the left side of the upward edge
            let c = cross(a, b, q);
            if (b.1 > a.1 && c > 0) || (b.1 < a.1 && c < 0) {
                inside = !inside;
            }
        }
    }
    inside
}

mod vertex_degrees {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::model::GeoPosition;

    pub fn serialize<S: Serializer>(v: &[GeoPosition], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|p| [p.latitude_deg(), p.longitude_deg()]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<GeoPosition>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        pairs
            .into_iter()
            .map(|[lat, lon]| {
                if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                    return Err(serde::de::Error::custom(format!(
                        "vertex [{lat}, {lon}] outside valid coordinate range"
                    )));
                }
                Ok(GeoPosition::from_degrees(lat, lon, 0, 0))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn poly(v: &[(i32, i32)]) -> SquareDefinition {
        SquareDefinition::new(
            "T",
            "test",
            v.iter().map(|&(lat, lon)| GeoPosition::new(lat, lon, 0, 0)).collect(),
        )
    }

    fn unit_square() -> SquareDefinition {
        // one degree on a side
        poly(&[(0, 0), (0, 10_000_000), (10_000_000, 10_000_000), (10_000_000, 0)])
    }

    fn at(lat: i32, lon: i32) -> GeoPosition {
        GeoPosition::new(lat, lon, 10, 0)
    }

    /// Independent winding-number oracle with an explicit boundary check.
    fn winding_oracle(p: &GeoPosition, boundary: &[GeoPosition]) -> bool {
        let (px, py) = (p.longitude_e7 as i128, p.latitude_e7 as i128);
        let n = boundary.len();
        let mut wn = 0i32;
        for i in 0..n {
            let (ax, ay) = (boundary[i].longitude_e7 as i128, boundary[i].latitude_e7 as i128);
            let j = (i + 1) % n;
            let (bx, by) = (boundary[j].longitude_e7 as i128, boundary[j].latitude_e7 as i128);
            let side = (bx - ax) * (py - ay) - (px - ax) * (by - ay);
            let within = px >= ax.min(bx) && px <= ax.max(bx) && py >= ay.min(by) && py <= ay.max(by);
            if side == 0 && within {
                return true;
            }
            if ay <= py {
                if by > py && side > 0 {
                    wn += 1;
                }
            } else if by <= py && side < 0 {
                wn -= 1;
            }
        }
        wn != 0
    }

    #[test]
    fn centroid_inside() {
        assert!(point_in_square(&at(5_000_000, 5_000_000), &unit_square()).unwrap());
    }

    #[test]
    fn exterior_point_outside() {
        assert!(!point_in_square(&at(5_000_000, 20_000_000), &unit_square()).unwrap());
        assert!(!point_in_square(&at(-10_000_000, 5_000_000), &unit_square()).unwrap());
    }

    #[test]
    fn vertices_and_edges_count_inside() {
        let sq = unit_square();
        for v in &sq.boundary {
            assert!(point_in_square(&at(v.latitude_e7, v.longitude_e7), &sq).unwrap());
            assert!(winding_oracle(&at(v.latitude_e7, v.longitude_e7), &sq.boundary));
        }
        assert!(point_in_square(&at(0, 3_000_000), &sq).unwrap());
        assert!(point_in_square(&at(10_000_000, 3_000_000), &sq).unwrap());
    }

    #[test]
    fn invalid_polygons_rejected() {
        let p = at(1, 1);
        assert_eq!(
            point_in_square(&p, &poly(&[(0, 0), (1, 1)])),
            Err(GeometryError::TooFewVertices(2))
        );
        assert_eq!(
            point_in_square(&p, &poly(&[(0, 0), (1, 1), (2, 2)])),
            Err(GeometryError::Degenerate)
        );
        // bow tie
        let bow = poly(&[(0, 0), (10, 10), (10, 0), (0, 10)]);
        assert!(matches!(bow.validate(), Err(GeometryError::SelfIntersecting(_, _))));
        assert_eq!(
            poly(&[(0, 0), (0, 0), (10, 0), (0, 10)]).validate(),
            Err(GeometryError::RepeatedVertex(0))
        );
    }

    #[test]
    fn no_fix_rejected() {
        let p = GeoPosition::no_fix(0);
        assert_eq!(point_in_square(&p, &unit_square()), Err(GeometryError::NoFix));
    }

    #[test]
    fn concave_polygon_notch() {
        // U shape: the notch between the arms is outside
        let u = poly(&[(0, 0), (0, 30), (30, 30), (30, 20), (10, 20), (10, 10), (30, 10), (30, 0)]);
        u.validate().unwrap();
        assert!(!contains(&at(20, 15), &u.boundary));
        assert!(contains(&at(20, 5), &u.boundary));
        assert!(contains(&at(5, 15), &u.boundary));
        assert!(contains(&at(10, 15), &u.boundary));
    }

    fn star_polygon() -> impl Strategy<Value = Vec<GeoPosition>> {
        (3usize..12).prop_flat_map(|n| {
            prop::collection::vec((0.0f64..1.0, 200i64..2000), n).prop_map(move |raw| {
                let mut angles: Vec<(f64, i64)> = raw
                    .iter()
                    .enumerate()
                    .map(|(i, &(jit, r))| ((i as f64 + 0.8 * jit) / n as f64 * std::f64::consts::TAU, r))
                    .collect();
                angles.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
                angles
                    .into_iter()
                    .map(|(a, r)| {
                        let lat = (r as f64 * a.sin()).round() as i32;
                        let lon = (r as f64 * a.cos()).round() as i32;
                        GeoPosition::new(lat, lon, 0, 0)
                    })
                    .collect()
            })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ray_casting_matches_winding_oracle(
            boundary in star_polygon(),
            pts in prop::collection::vec((-2100i32..2100, -2100i32..2100), 1000),
        ) {
            let sq = SquareDefinition::new("P", "p", boundary);
            prop_assume!(sq.validate().is_ok());
            for (lat, lon) in pts {
                let p = at(lat, lon);
                prop_assert_eq!(contains(&p, &sq.boundary), winding_oracle(&p, &sq.boundary));
            }
            for v in &sq.boundary {
                prop_assert!(contains(&at(v.latitude_e7, v.longitude_e7), &sq.boundary));
            }
        }

        #[test]
        fn rotation_invariant(
            boundary in star_polygon(),
            shift in 0usize..12,
            pts in prop::collection::vec((-2100i32..2100, -2100i32..2100), 50),
        ) {
            let sq = SquareDefinition::new("P", "p", boundary.clone());
            prop_assume!(sq.validate().is_ok());
            let mut rotated = boundary;
            let k = shift % rotated.len();
            rotated.rotate_left(k);
            let rsq = SquareDefinition::new("P", "p", rotated);
            for (lat, lon) in pts {
                let p = at(lat, lon);
                prop_assert_eq!(point_in_square(&p, &sq).unwrap(), point_in_square(&p, &rsq).unwrap());
            }
        }
    }

    #[test]
    fn boundary_serializes_as_degree_pairs() {
        let sq = poly(&[(473_661_230, 85_517_310), (473_661_230, 85_527_310), (473_671_230, 85_517_310)]);
        let json = serde_json::to_string(&sq).unwrap();
        assert!(json.contains("[47.366123,8.551731]"), "{json}");
        let back: SquareDefinition = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sq);
    }
}
