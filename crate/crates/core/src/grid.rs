//! Spatio-temporal cell discretization and Von Neumann neighborhoods.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default spatial cell edge, meters.
pub const DEFAULT_CELL_SIZE_M: f64 = 5000.0;

/// How locations are binned into cells and how far a neighborhood reaches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub cell_size_m: f64,
    /// Seconds per temporal cell. Zero collapses time into a single cell.
    pub cell_size_s: f64,
    pub neighborhood_depth: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cell_size_m: DEFAULT_CELL_SIZE_M,
            cell_size_s: 0.0,
            neighborhood_depth: 1,
        }
    }
}

impl GridConfig {
    pub fn new(cell_size_m: f64, cell_size_s: f64, neighborhood_depth: u32) -> Result<Self> {
        let cfg = Self {
            cell_size_m,
            cell_size_s,
            neighborhood_depth,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return Err(Error::input(format!(
                "cell_size_m must be positive and finite, got {}",
                self.cell_size_m
            )));
        }
        if !(self.cell_size_s.is_finite() && self.cell_size_s >= 0.0) {
            return Err(Error::input(format!(
                "cell_size_s must be non-negative and finite, got {}",
                self.cell_size_s
            )));
        }
        Ok(())
    }

    pub fn temporal(&self) -> bool {
        self.cell_size_s > 0.0
    }

    /// The cell containing `(time, easting, northing)`.
    pub fn cell_of(&self, time: f64, easting: f64, northing: f64) -> Result<CellKey> {
        if !(time.is_finite() && easting.is_finite() && northing.is_finite()) {
            return Err(Error::input(format!(
                "non-finite location ({time}, {easting}, {northing})"
            )));
        }
        let t_idx = if self.temporal() {
            (time / self.cell_size_s).floor() as i64
        } else {
            0
        };
        Ok(CellKey {
            t_idx,
            e_idx: (easting / self.cell_size_m).floor() as i64,
            n_idx: (northing / self.cell_size_m).floor() as i64,
        })
    }

    /// Offsets of every cell within Manhattan distance `neighborhood_depth`,
    /// including the zero offset. The temporal axis only participates when
    /// temporal cells are enabled.
    pub fn neighborhood_offsets(&self) -> Vec<CellKey> {
        let d = self.neighborhood_depth as i64;
        let t_range = if self.temporal() { d } else { 0 };
        let mut out = Vec::new();
        for dt in -t_range..=t_range {
            let rem_t = d - dt.abs();
            for de in -rem_t..=rem_t {
                let rem_e = rem_t - de.abs();
                for dn in -rem_e..=rem_e {
                    out.push(CellKey::new(dt, de, dn));
                }
            }
        }
        out
    }

    /// `c` plus every cell in its Von Neumann neighborhood, sorted.
    pub fn neighborhood(&self, c: CellKey) -> Vec<CellKey> {
        let mut cells: Vec<CellKey> = self
            .neighborhood_offsets()
            .into_iter()
            .map(|o| c.offset(o))
            .collect();
        cells.sort_unstable();
        cells
    }

    /// Spatial center of a cell, meters.
    pub fn cell_center(&self, c: CellKey) -> (f64, f64) {
        (
            (c.e_idx as f64 + 0.5) * self.cell_size_m,
            (c.n_idx as f64 + 0.5) * self.cell_size_m,
        )
    }
}

/// Integer index of a spatio-temporal cell. Ordering is lexicographic on
/// `(t_idx, e_idx, n_idx)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub t_idx: i64,
    pub e_idx: i64,
    pub n_idx: i64,
}

impl CellKey {
    pub const fn new(t_idx: i64, e_idx: i64, n_idx: i64) -> Self {
        Self {
            t_idx,
            e_idx,
            n_idx,
        }
    }

    pub fn offset(self, by: CellKey) -> CellKey {
        CellKey::new(
            self.t_idx + by.t_idx,
            self.e_idx + by.e_idx,
            self.n_idx + by.n_idx,
        )
    }

    pub fn manhattan(self, other: CellKey) -> i64 {
        (self.t_idx - other.t_idx).abs()
            + (self.e_idx - other.e_idx).abs()
            + (self.n_idx - other.n_idx).abs()
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.t_idx, self.e_idx, self.n_idx)
    }
}

impl FromStr for CellKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::input(format!("bad cell key {s:?}")));
        }
        let parse = |p: &str| {
            p.trim()
                .parse::<i64>()
                .map_err(|_| Error::input(format!("bad cell key {s:?}")))
        };
        Ok(CellKey::new(parse(parts[0])?, parse(parts[1])?, parse(parts[2])?))
    }
}

impl Serialize for CellKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CellKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spatial(depth: u32) -> GridConfig {
        GridConfig::new(5000.0, 0.0, depth).unwrap()
    }

    #[test]
    fn cell_of_floor_divides() {
        let cfg = spatial(1);
        assert_eq!(cfg.cell_of(0.0, 12300.0, 4900.0).unwrap(), CellKey::new(0, 2, 0));
        assert_eq!(cfg.cell_of(0.0, -1.0, 0.0).unwrap(), CellKey::new(0, -1, 0));
        assert_eq!(cfg.cell_of(0.0, 0.0, 0.0).unwrap(), CellKey::new(0, 0, 0));
        // time ignored without temporal cells
        assert_eq!(cfg.cell_of(1e9, 0.0, 0.0).unwrap().t_idx, 0);

        let temporal = GridConfig::new(5000.0, 3600.0, 1).unwrap();
        assert_eq!(temporal.cell_of(7200.0, 0.0, 0.0).unwrap().t_idx, 2);
        assert_eq!(temporal.cell_of(-1.0, 0.0, 0.0).unwrap().t_idx, -1);
    }

    #[test]
    fn cell_of_rejects_non_finite() {
        let cfg = spatial(1);
        assert!(cfg.cell_of(f64::NAN, 0.0, 0.0).is_err());
        assert!(cfg.cell_of(0.0, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn invalid_configs() {
        assert!(GridConfig::new(0.0, 0.0, 1).is_err());
        assert!(GridConfig::new(-5.0, 0.0, 1).is_err());
        assert!(GridConfig::new(5.0, -1.0, 1).is_err());
        assert!(GridConfig::new(f64::NAN, 0.0, 1).is_err());
    }

    #[test]
    fn von_neumann_spatial() {
        let mut got = spatial(1).neighborhood(CellKey::new(0, 2, 3));
        got.sort();
        let mut want = vec![
            CellKey::new(0, 2, 3),
            CellKey::new(0, 1, 3),
            CellKey::new(0, 3, 3),
            CellKey::new(0, 2, 2),
            CellKey::new(0, 2, 4),
        ];
        want.sort();
        assert_eq!(got, want);
        assert_eq!(spatial(0).neighborhood(CellKey::new(0, 2, 3)), vec![CellKey::new(0, 2, 3)]);
        // depth 2 in 2D: 1 + 4 + 8
        assert_eq!(spatial(2).neighborhood(CellKey::new(0, 0, 0)).len(), 13);
    }

    #[test]
    fn von_neumann_temporal() {
        let cfg = GridConfig::new(5000.0, 60.0, 1).unwrap();
        let got = cfg.neighborhood(CellKey::new(1, 0, 0));
        assert_eq!(got.len(), 7);
        assert!(got.contains(&CellKey::new(0, 0, 0)));
        assert!(got.contains(&CellKey::new(2, 0, 0)));
    }

    #[test]
    fn key_string_round_trip() {
        let k = CellKey::new(-3, 0, 17);
        assert_eq!(k.to_string(), "-3,0,17");
        assert_eq!("-3,0,17".parse::<CellKey>().unwrap(), k);
        assert!("1,2".parse::<CellKey>().is_err());
    }

    proptest! {
        #[test]
        fn neighborhood_is_symmetric(
            a in (-3i64..3, -5i64..5, -5i64..5),
            b in (-3i64..3, -5i64..5, -5i64..5),
            depth in 0u32..4,
            temporal in any::<bool>(),
        ) {
            let cfg = GridConfig::new(5000.0, if temporal { 10.0 } else { 0.0 }, depth).unwrap();
            let (a, b) = (CellKey::new(a.0, a.1, a.2), CellKey::new(b.0, b.1, b.2));
            let a_has_b = cfg.neighborhood(a).contains(&b);
            let b_has_a = cfg.neighborhood(b).contains(&a);
            prop_assert_eq!(a_has_b, b_has_a);
        }

        #[test]
        fn neighborhood_matches_manhattan_ball(depth in 0u32..4, temporal in any::<bool>()) {
            let cfg = GridConfig::new(5000.0, if temporal { 10.0 } else { 0.0 }, depth).unwrap();
            let c = CellKey::new(0, 0, 0);
            let cells = cfg.neighborhood(c);
            let d = depth as i64;
            let tr = if temporal { d } else { 0 };
            let mut want = Vec::new();
            for t in -tr..=tr { for e in -d..=d { for n in -d..=d {
                let k = CellKey::new(t, e, n);
                if k.manhattan(c) <= d { want.push(k); }
            }}}
            want.sort();
            prop_assert_eq!(cells, want);
        }
    }
}
