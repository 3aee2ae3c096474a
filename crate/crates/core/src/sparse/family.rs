use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{cube_cells, DyadicCube, Grid};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Constructed,
    Manual,
}

/// Cubes with designated exceptional cell sets `E_Q`.
#[derive(Clone, Debug)]
pub struct SparseFamily {
    pub grid: Grid,
    pub cubes: Vec<DyadicCube>,
    /// Sorted cell indices of `E_Q`, aligned with `cubes`.
    pub exceptional: Vec<Vec<usize>>,
    pub eta: f64,
    pub provenance: Provenance,
    pub d_used: Option<f64>,
}

/// Outcome of the cell-exact sparseness check.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseCertificate {
    pub subsets_ok: bool,
    pub disjoint_ok: bool,
    pub measure_ok: bool,
    /// `min_Q |E_Q| / |Q|`, or 1 for an empty family.
    pub min_ratio: f64,
    pub worst_cube: Option<DyadicCube>,
    pub passed: bool,
}

impl SparseFamily {
    /// Family with `E_Q = Q` for every cube.
    pub fn manual(grid: &Grid, cubes: Vec<DyadicCube>, eta: f64) -> Result<Self> {
        let exceptional = cubes
            .iter()
            .map(|q| cube_cells(q, grid))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: grid.clone(),
            cubes,
            exceptional,
            eta,
            provenance: Provenance::Manual,
            d_used: None,
        })
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    /// `|E_Q| / |Q|` per cube, from cell counts.
    pub fn ratios(&self) -> Result<Vec<f64>> {
        self.cubes
            .iter()
            .zip(&self.exceptional)
            .map(|(q, e)| Ok(e.len() as f64 / cube_cells(q, &self.grid)?.len() as f64))
            .collect()
    }

    pub fn to_record(&self) -> Result<SparseFamilyRecord> {
        let ratios = self.ratios()?;
        Ok(SparseFamilyRecord {
            eta: self.eta,
            d_used: self.d_used,
            dim: self.grid.dim(),
            cubes: self
                .cubes
                .iter()
                .zip(ratios)
                .map(|(q, r)| (q.level, q.index.clone(), r))
                .collect(),
        })
    }

    pub fn to_text(&self) -> Result<String> {
        Ok(self.to_record()?.to_text())
    }
}

/// Checks `E_Q ⊂ Q`, pairwise disjointness and `|E_Q| >= eta |Q|`, all by
/// cell counting.
pub fn verify_sparse(s: &SparseFamily) -> SparseCertificate {
    let g = &s.grid;
    let mut owner = vec![false; g.len()];
    let mut subsets_ok = true;
    let mut disjoint_ok = true;
    let mut measure_ok = true;
    let mut min_ratio = 1.0f64;
    let mut worst_cube = None;
    for (q, e) in s.cubes.iter().zip(&s.exceptional) {
        let cells = match cube_cells(q, g) {
            Ok(c) => c,
            Err(_) => {
                subsets_ok = false;
                continue;
            }
        };
        for &c in e {
            if cells.binary_search(&c).is_err() {
                subsets_ok = false;
            }
            if c < owner.len() {
                if owner[c] {
                    disjoint_ok = false;
                }
                owner[c] = true;
            } else {
                subsets_ok = false;
            }
        }
        let ratio = e.len() as f64 / cells.len() as f64;
        if (e.len() as f64) < s.eta * cells.len() as f64 {
            measure_ok = false;
        }
        if ratio < min_ratio || worst_cube.is_none() && ratio <= min_ratio {
            min_ratio = ratio;
            worst_cube = Some(q.clone());
        }
    }
    SparseCertificate {
        subsets_ok,
        disjoint_ok,
        measure_ok,
        min_ratio,
        worst_cube,
        passed: subsets_ok && disjoint_ok && measure_ok,
    }
}

/// Serializable summary of a family: one line per cube with `|E_Q|/|Q|`.
///
/// ```text
/// eta=0.5 d_used=4 dim=2
/// 2 2 2 0.75
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct SparseFamilyRecord {
    pub eta: f64,
    pub d_used: Option<f64>,
    pub dim: usize,
    pub cubes: Vec<(u32, Vec<i64>, f64)>,
}

const MAX_DIM: usize = 8;

impl SparseFamilyRecord {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let d = self.d_used.map_or("none".to_string(), crate::harness::fmt_f64);
        let _ = writeln!(
            s,
            "eta={} d_used={} dim={}",
            crate::harness::fmt_f64(self.eta),
            d,
            self.dim
        );
        for (level, index, ratio) in &self.cubes {
            let _ = write!(s, "{level}");
            for m in index {
                let _ = write!(s, " {m}");
            }
            let _ = writeln!(s, " {}", crate::harness::fmt_f64(*ratio));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let perr = |m: String| Error::Parse(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| perr("empty sparse family".into()))?;
        let (mut eta, mut d_used, mut dim) = (None, None, None);
        for tok in header.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| perr(format!("bad header token {tok:?}")))?;
            match k {
                "eta" => eta = Some(parse_f64(v)?),
                "d_used" => {
                    d_used = Some(if v == "none" { None } else { Some(parse_f64(v)?) })
                }
                "dim" => {
                    dim = Some(
                        v.parse::<usize>()
                            .map_err(|_| perr(format!("bad dim {v:?}")))?,
                    )
                }
                _ => return Err(perr(format!("unknown header key {k:?}"))),
            }
        }
        let eta = eta.ok_or_else(|| perr("missing eta".into()))?;
        let dim = dim.ok_or_else(|| perr("missing dim".into()))?;
        if dim == 0 || dim > MAX_DIM {
            return Err(perr(format!("dimension {dim} out of range")));
        }
        if !(eta > 0.0 && eta < 1.0 || eta == 1.0) {
            return Err(perr(format!("eta {eta} outside (0, 1]")));
        }
        let mut cubes = Vec::new();
        for (i, line) in lines.enumerate() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != dim + 2 {
                return Err(perr(format!("line {}: expected {} fields", i + 2, dim + 2)));
            }
            let level: u32 = toks[0]
                .parse()
                .map_err(|_| perr(format!("line {}: bad level", i + 2)))?;
            if level > 62 {
                return Err(perr(format!("line {}: level {level} too deep", i + 2)));
            }
            let index = toks[1..=dim]
                .iter()
                .map(|t| {
                    t.parse::<i64>()
                        .map_err(|_| perr(format!("line {}: bad index {t:?}", i + 2)))
                })
                .collect::<Result<Vec<_>>>()?;
            let ratio = parse_f64(toks[dim + 1])?;
            if !(0.0..=1.0).contains(&ratio) {
                return Err(perr(format!("line {}: ratio {ratio} outside [0, 1]", i + 2)));
            }
            cubes.push((level, index, ratio));
        }
        Ok(Self {
            eta,
            d_used: d_used.flatten(),
            dim,
            cubes,
        })
    }
}

fn parse_f64(v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::Parse(format!("bad number {v:?}")))?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Parse(format!("non-finite number {v:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disjoint_manual_family_passes() {
        let g = Grid::centered(2, 2.0, 16).unwrap();
        let a = DyadicCube::new(g.bbox(), 1, vec![0, 0]).unwrap();
        let b = DyadicCube::new(g.bbox(), 2, vec![3, 3]).unwrap();
        let s = SparseFamily::manual(&g, vec![a, b], 0.5).unwrap();
        let c = verify_sparse(&s);
        assert!(c.passed);
        assert_eq!(c.min_ratio, 1.0);
    }

    #[test]
    fn overlapping_exceptional_sets_fail() {
        let g = Grid::centered(2, 2.0, 16).unwrap();
        let a = DyadicCube::new(g.bbox(), 1, vec![0, 0]).unwrap();
        let child = a.children().remove(0);
        let s = SparseFamily::manual(&g, vec![a, child], 0.5).unwrap();
        let c = verify_sparse(&s);
        assert!(!c.disjoint_ok && !c.passed);
    }

    #[test]
    fn small_exceptional_set_fails_measure() {
        let g = Grid::centered(2, 2.0, 16).unwrap();
        let a = DyadicCube::new(g.bbox(), 1, vec![0, 0]).unwrap();
        let mut s = SparseFamily::manual(&g, vec![a], 0.5).unwrap();
        s.exceptional[0].truncate(10);
        let c = verify_sparse(&s);
        assert!(c.subsets_ok && c.disjoint_ok && !c.measure_ok);
        assert_eq!(c.min_ratio, 10.0 / 64.0);
    }

    #[test]
    fn text_round_trip() {
        let g = Grid::centered(2, 2.0, 16).unwrap();
        let a = DyadicCube::new(g.bbox(), 2, vec![2, 2]).unwrap();
        let mut s = SparseFamily::manual(&g, vec![a], 0.5).unwrap();
        s.d_used = Some(4.0);
        s.exceptional[0].truncate(12);
        let text = s.to_text().unwrap();
        assert!(text.starts_with("eta="));
        let rec = SparseFamilyRecord::parse(&text).unwrap();
        assert_eq!(rec, s.to_record().unwrap());
        assert_eq!(rec.cubes[0].2, 0.75);
    }

    #[test]
    fn parse_rejects_garbage() {
        for bad in [
            "",
            "eta=0.5",
            "eta=0.5 dim=2\n1 0 0.5",
            "eta=0.5 dim=2\n1 0 0 2.0",
            "eta=nan dim=2",
            "eta=0.5 dim=2 color=red",
            "eta=0.5 dim=99",
        ] {
            assert!(SparseFamilyRecord::parse(bad).is_err(), "{bad:?}");
        }
        let ok = SparseFamilyRecord::parse("eta=0.5 d_used=none dim=2\n\n3 1 -2 1\n").unwrap();
        assert_eq!(ok.cubes, vec![(3, vec![1, -2], 1.0)]);
        assert_eq!(ok.d_used, None);
    }
}
