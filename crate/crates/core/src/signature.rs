//! Transition signatures and the signature library.
//!
//! Toggling breaker `l` with every other breaker held at a context changes
//! the pseudo-inverse by a rank-one matrix. The column space of that
//! difference, seen through the sensor placement and normalized, is the
//! signature every such transition imprints on a trend vector.

use std::collections::HashMap;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, SwitchStatus, TopologySet};
use crate::linalg::{self, CMatrix, CVector};
use crate::network::fingerprint;
use crate::parallel::{self, Execution};

/// Power-iteration steps used to extract a signature direction.
pub const POWER_ITERATIONS: usize = 50;

/// Restricted signatures shorter than this are treated as invisible.
const ZERO_RESTRICTION: f64 = 1e-12;

pub const P33: [usize; 33] = [
    1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26, 27, 28, 29, 30, 31,
    32, 33,
];
pub const P15: [usize; 15] = [3, 8, 9, 10, 12, 15, 16, 17, 18, 19, 21, 24, 25, 27, 30];
pub const P7: [usize; 7] = [9, 12, 15, 18, 24, 27, 30];

/// Buses carrying a phasor measurement unit, sorted by bus id.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Placement {
    bus_ids: Vec<usize>,
    indices: Vec<usize>,
}

impl Placement {
    pub fn from_bus_ids(grid: &Grid, ids: &[usize]) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::InvalidPlacement("no sensors".into()));
        }
        let mut ids = ids.to_vec();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidPlacement("duplicate bus id".into()));
        }
        let indices = ids
            .iter()
            .map(|&id| {
                grid.bus_index(id)
                    .ok_or_else(|| Error::InvalidPlacement(format!("unknown bus id {id}")))
            })
            .collect::<Result<_>>()?;
        Ok(Placement { bus_ids: ids, indices })
    }

    /// Every bus of the grid.
    pub fn full(grid: &Grid) -> Self {
        let ids: Vec<usize> = grid.buses().iter().map(|b| b.id).collect();
        Self::from_bus_ids(grid, &ids).expect("grid bus ids are valid")
    }

    /// `P33`, `P15` or `P7` on the IEEE 33-bus feeder.
    pub fn preset(grid: &Grid, name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "P33" => Self::from_bus_ids(grid, &P33),
            "P15" => Self::from_bus_ids(grid, &P15),
            "P7" => Self::from_bus_ids(grid, &P7),
            other => Err(Error::InvalidPlacement(format!("unknown preset {other:?}"))),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn bus_ids(&self) -> &[usize] {
        &self.bus_ids
    }

    /// Internal bus indices, aligned with [`bus_ids`](Self::bus_ids).
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, bus_id: usize) -> bool {
        self.bus_ids.binary_search(&bus_id).is_ok()
    }

    /// Applies the selection map to a full bus vector.
    pub fn select(&self, full: &[Complex64]) -> Vec<Complex64> {
        self.indices.iter().map(|&i| full[i]).collect()
    }

    pub fn with_bus(&self, grid: &Grid, bus_id: usize) -> Result<Self> {
        let mut ids = self.bus_ids.clone();
        ids.push(bus_id);
        Self::from_bus_ids(grid, &ids)
    }
}

/// A breaker and the state of all other breakers. The breaker's own bit in
/// `context` is always cleared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SignatureKey {
    breaker: usize,
    context: SwitchStatus,
}

impl SignatureKey {
    pub fn new(breaker: usize, status: SwitchStatus) -> Self {
        SignatureKey {
            breaker,
            context: status.with(breaker, false),
        }
    }

    pub fn breaker(&self) -> usize {
        self.breaker
    }

    pub fn context(&self) -> SwitchStatus {
        self.context
    }

    pub fn open_status(&self) -> SwitchStatus {
        self.context
    }

    pub fn closed_status(&self) -> SwitchStatus {
        self.context.with(self.breaker, true)
    }

    /// Context rendered with the breaker's own position as `-`.
    pub fn context_label(&self) -> String {
        self.context
            .to_string()
            .char_indices()
            .map(|(i, c)| if i == self.breaker { '-' } else { c })
            .collect()
    }

    pub fn is_admissible(&self, grid: &Grid) -> bool {
        grid.is_connected(&self.open_status()) && grid.is_connected(&self.closed_status())
    }
}

/// `X_closed - X_open` for the key.
pub fn transition_difference(grid: &Grid, key: &SignatureKey) -> Result<CMatrix> {
    let closed = grid.pseudo_inverse(&key.closed_status())?;
    let open = grid.pseudo_inverse(&key.open_status())?;
    Ok(closed - open)
}

fn direction_of(diff: &CMatrix, key: &SignatureKey) -> Result<CVector> {
    let mut g = linalg::dominant_direction(diff, POWER_ITERATIONS).ok_or_else(|| Error::Unobservable {
        breaker: key.breaker + 1,
        context: key.context_label(),
    })?;
    // Lambda projection: subtract the slack entry from every component.
    let slack = g[0];
    for v in g.iter_mut() {
        *v -= slack;
    }
    Ok(g)
}

/// Full-dimension signature direction `Lambda g_hat` for a transition, with
/// its largest entry real and positive.
pub fn signature_vector(grid: &Grid, key: &SignatureKey) -> Result<CVector> {
    for s in [key.open_status(), key.closed_status()] {
        grid.check_admissible(&s)?;
    }
    direction_of(&transition_difference(grid, key)?, key)
}

/// `sigma_2 / sigma_1` of the pseudo-inverse difference; zero for an exact
/// rank-one change.
pub fn rank_one_ratio(grid: &Grid, key: &SignatureKey) -> Result<f64> {
    let sv = linalg::singular_values(&transition_difference(grid, key)?);
    Ok(if sv[0] == 0.0 { 0.0 } else { sv[1] / sv[0] })
}

/// Restricts a full signature to the placement and normalizes it.
pub fn restrict_and_normalize(g: &[Complex64], placement: &Placement) -> Result<Vec<Complex64>> {
    let slack = g[0];
    let mut v: Vec<Complex64> = placement.indices().iter().map(|&i| g[i] - slack).collect();
    let n = linalg::norm(&v);
    if !(n > ZERO_RESTRICTION) {
        return Err(Error::ZeroSignature);
    }
    for x in v.iter_mut() {
        *x /= n;
    }
    Ok(v)
}

/// Every admissible key of a grid with its full-dimension unit signature.
/// Independent of placement; restrict it with [`SignatureSet::restrict`].
#[derive(Debug, Clone)]
pub struct SignatureSet {
    keys: Vec<SignatureKey>,
    vectors: Vec<CVector>,
    num_switches: usize,
    fingerprint: String,
}

impl SignatureSet {
    pub fn compute(grid: &Grid, exec: Execution) -> Result<Self> {
        let topologies = TopologySet::build(grid, exec)?;
        Self::from_topologies(grid, &topologies, exec)
    }

    pub fn from_topologies(grid: &Grid, topologies: &TopologySet, exec: Execution) -> Result<Self> {
        let r = grid.num_switches();
        let mut keys = Vec::new();
        for breaker in 0..r {
            for ctx in 0..(1u64 << r) {
                if ctx >> breaker & 1 == 1 {
                    continue;
                }
                let key = SignatureKey::new(breaker, SwitchStatus::from_mask(ctx, r));
                if topologies.contains(&key.open_status()) && topologies.contains(&key.closed_status()) {
                    keys.push(key);
                }
            }
        }
        let vectors = parallel::map_slice(exec, &keys, |key| {
            let diff = topologies.get(&key.closed_status()).expect("admissible")
                - topologies.get(&key.open_status()).expect("admissible");
            let g = direction_of(&diff, key)?;
            let n = g.norm();
            Ok(g / Complex64::new(n, 0.0))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        Ok(SignatureSet {
            keys,
            vectors,
            num_switches: r,
            fingerprint: fingerprint(grid),
        })
    }

    pub fn keys(&self) -> &[SignatureKey] {
        &self.keys
    }

    pub fn vector(&self, i: usize) -> &CVector {
        &self.vectors[i]
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn restrict(&self, placement: &Placement) -> Result<SignatureLibrary> {
        let mut entries = Vec::with_capacity(self.keys.len());
        for (key, g) in self.keys.iter().zip(&self.vectors) {
            let v = restrict_and_normalize(g.as_slice(), placement).map_err(|e| match e {
                Error::ZeroSignature => Error::Unobservable {
                    breaker: key.breaker + 1,
                    context: key.context_label(),
                },
                other => other,
            })?;
            entries.push(LibraryEntry { key: *key, vector: v });
        }
        Ok(SignatureLibrary::from_parts(
            entries,
            placement.clone(),
            self.num_switches,
            self.fingerprint.clone(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LibraryEntry {
    pub key: SignatureKey,
    pub vector: Vec<Complex64>,
}

/// One hypothesis of the particular library: toggling `breaker` from the
/// current status leads to `after`.
#[derive(Debug, Clone, Copy)]
pub struct Candidate<'a> {
    pub breaker: usize,
    pub signature: &'a [Complex64],
    pub after: SwitchStatus,
}

/// Unit signatures restricted to a placement, keyed by (breaker, context).
#[derive(Debug, Clone)]
pub struct SignatureLibrary {
    entries: Vec<LibraryEntry>,
    placement: Placement,
    num_switches: usize,
    fingerprint: String,
    index: HashMap<SignatureKey, usize>,
}

impl PartialEq for SignatureLibrary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
            && self.placement == other.placement
            && self.num_switches == other.num_switches
            && self.fingerprint == other.fingerprint
    }
}

/// Builds the library of all admissible transitions for a placement.
pub fn build_library(grid: &Grid, placement: &Placement) -> Result<SignatureLibrary> {
    SignatureSet::compute(grid, Execution::default())?.restrict(placement)
}

/// The candidates reachable from `sigma` by one breaker action. Toggles
/// that would disconnect the grid have no library entry and are skipped.
pub fn particular_library<'a>(lib: &'a SignatureLibrary, sigma: &SwitchStatus) -> Vec<Candidate<'a>> {
    (0..lib.num_switches)
        .filter_map(|breaker| {
            let key = SignatureKey::new(breaker, *sigma);
            lib.get(&key).map(|signature| Candidate {
                breaker,
                signature,
                after: sigma.toggled(breaker),
            })
        })
        .collect()
}

impl SignatureLibrary {
    pub fn from_parts(
        mut entries: Vec<LibraryEntry>,
        placement: Placement,
        num_switches: usize,
        fingerprint: String,
    ) -> Self {
        entries.sort_by_key(|e| e.key);
        let index = entries.iter().enumerate().map(|(i, e)| (e.key, i)).collect();
        SignatureLibrary {
            entries,
            placement,
            num_switches,
            fingerprint,
            index,
        }
    }

    pub fn entries(&self) -> &[LibraryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn placement(&self) -> &Placement {
        &self.placement
    }

    pub fn num_switches(&self) -> usize {
        self.num_switches
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn dimension(&self) -> usize {
        self.placement.len()
    }

    pub fn get(&self, key: &SignatureKey) -> Option<&[Complex64]> {
        self.index.get(key).map(|&i| self.entries[i].vector.as_slice())
    }

    /// Checks that the library was built for this grid and placement.
    pub fn validate_for(&self, grid: &Grid, placement: &Placement) -> Result<()> {
        if self.fingerprint != fingerprint(grid) {
            return Err(Error::LibraryMismatch("grid fingerprint differs".into()));
        }
        if &self.placement != placement {
            return Err(Error::LibraryMismatch("placement differs".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = LibraryFile {
            format: LIBRARY_FORMAT.into(),
            version: LIBRARY_VERSION,
            fingerprint: self.fingerprint.clone(),
            num_switches: self.num_switches,
            placement: self.placement.bus_ids.clone(),
            entries: self
                .entries
                .iter()
                .map(|e| EntryRecord {
                    breaker: e.key.breaker + 1,
                    context: e.key.context.to_string(),
                    re: e.vector.iter().map(|c| c.re).collect(),
                    im: e.vector.iter().map(|c| c.im).collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// Parses a cache file. The placement is rebuilt against `grid`, which
    /// must be the grid the library was computed for.
    pub fn from_json(text: &str, grid: &Grid) -> Result<Self> {
        let file: LibraryFile = serde_json::from_str(text)?;
        if file.format != LIBRARY_FORMAT || file.version != LIBRARY_VERSION {
            return Err(Error::LibraryMismatch(format!(
                "unsupported library format {} v{}",
                file.format, file.version
            )));
        }
        if file.fingerprint != fingerprint(grid) {
            return Err(Error::LibraryMismatch("grid fingerprint differs".into()));
        }
        let placement = Placement::from_bus_ids(grid, &file.placement)?;
        let mut entries = Vec::with_capacity(file.entries.len());
        for rec in file.entries {
            let ctx: SwitchStatus = rec.context.parse()?;
            if ctx.len() != file.num_switches || rec.breaker == 0 || rec.breaker > file.num_switches {
                return Err(Error::LibraryMismatch("entry key out of range".into()));
            }
            if rec.re.len() != placement.len() || rec.im.len() != placement.len() {
                return Err(Error::DimensionMismatch {
                    expected: placement.len(),
                    got: rec.re.len(),
                });
            }
            entries.push(LibraryEntry {
                key: SignatureKey::new(rec.breaker - 1, ctx),
                vector: rec
                    .re
                    .iter()
                    .zip(&rec.im)
                    .map(|(&re, &im)| Complex64::new(re, im))
                    .collect(),
            });
        }
        Ok(Self::from_parts(
            entries,
            placement,
            file.num_switches,
            file.fingerprint,
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>, grid: &Grid) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, grid)
    }
}

const LIBRARY_FORMAT: &str = "feeder-topo-signature-library";
const LIBRARY_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LibraryFile {
    format: String,
    version: u32,
    fingerprint: String,
    num_switches: usize,
    placement: Vec<usize>,
    entries: Vec<EntryRecord>,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    breaker: usize,
    context: String,
    re: Vec<f64>,
    im: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Base, Bus};
    use crate::network::ieee33;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bus(id: usize, slack: bool) -> Bus {
        Bus {
            id,
            p_kw: 0.0,
            q_kvar: 0.0,
            is_slack: slack,
        }
    }

    /// 1-2-3 path plus a switched line 1-3.
    fn triangle() -> Grid {
        Grid::new(
            vec![bus(1, true), bus(2, false), bus(3, false)],
            vec![
                (1, 2, c(1.0, 0.0), None),
                (2, 3, c(1.0, 0.0), None),
                (1, 3, c(1.0, 0.0), Some(1)),
            ],
            Base { kv: 1.0, mva: 1.0 },
        )
        .unwrap()
    }

    #[test]
    fn one_switch_gives_one_entry() {
        let g = triangle();
        let lib = build_library(&g, &Placement::full(&g)).unwrap();
        assert_eq!(lib.len(), 1);
    }

    #[test]
    fn triangle_signature_matches_brute_force_difference() {
        // Open: X = [[0,0,0],[0,1,1],[0,1,2]]. Closed: the grounded Laplacian
        // [[2,-1],[-1,2]] inverts to [[2,1],[1,2]]/3, so the difference on
        // buses 2,3 is -1/3 [[1,2],[2,4]], spanned by (0, 1, 2).
        let g = triangle();
        let key = SignatureKey::new(0, SwitchStatus::all_open(1));
        let v = signature_vector(&g, &key).unwrap();
        let expected = CVector::from_vec(vec![c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]).normalize();
        let got = v.normalize();
        assert!((linalg::inner(got.as_slice(), expected.as_slice()).norm() - 1.0).abs() < 1e-12);
        // Largest entry (bus 3) is real positive.
        assert!(v[2].re > 0.0 && v[2].im == 0.0);
    }

    #[test]
    fn parallel_switch_on_path_end_moves_only_last_bus() {
        // Fixed path 1-2-3 plus a switched line in parallel with 2-3:
        // X_open (e2 - e3) = (0, 0, -1), so the signature is e3.
        let g = Grid::new(
            vec![bus(1, true), bus(2, false), bus(3, false)],
            vec![
                (1, 2, c(1.0, 0.0), None),
                (2, 3, c(1.0, 0.0), None),
                (2, 3, c(1.0, 0.0), Some(1)),
            ],
            Base { kv: 1.0, mva: 1.0 },
        )
        .unwrap();
        let v = signature_vector(&g, &SignatureKey::new(0, SwitchStatus::all_open(1))).unwrap();
        assert!(v[0].norm() < 1e-15 && v[1].norm() < 1e-12);
        assert!((v[2] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn restrict_rejects_invisible_signature() {
        let g = triangle();
        let p = Placement::from_bus_ids(&g, &[1]).unwrap();
        let v = [c(0.0, 0.0), c(0.6, 0.0), c(0.8, 0.0)];
        assert!(matches!(restrict_and_normalize(&v, &p), Err(Error::ZeroSignature)));
        let p2 = Placement::from_bus_ids(&g, &[3]).unwrap();
        assert_eq!(restrict_and_normalize(&v, &p2).unwrap(), vec![c(1.0, 0.0)]);
    }

    #[test]
    fn full_placement_restriction_is_plain_normalization() {
        let g = triangle();
        let v = [c(0.0, 0.0), c(3.0, 0.0), c(0.0, 4.0)];
        let r = restrict_and_normalize(&v, &Placement::full(&g)).unwrap();
        assert_eq!(r, vec![c(0.0, 0.0), c(0.6, 0.0), c(0.0, 0.8)]);
    }

    #[test]
    fn placement_validation() {
        let g = triangle();
        assert!(Placement::from_bus_ids(&g, &[2, 2]).is_err());
        assert!(Placement::from_bus_ids(&g, &[7]).is_err());
        assert!(Placement::from_bus_ids(&g, &[]).is_err());
        let p = Placement::from_bus_ids(&g, &[3, 1]).unwrap();
        assert_eq!(p.bus_ids(), &[1, 3]);
        assert_eq!(p.indices(), &[0, 2]);
    }

    #[test]
    fn ieee33_library_has_80_unit_entries() {
        let g = ieee33();
        let lib = build_library(&g, &Placement::preset(&g, "P7").unwrap()).unwrap();
        assert_eq!(lib.len(), 80);
        for e in lib.entries() {
            assert!((linalg::norm(&e.vector) - 1.0).abs() < 1e-12);
            assert_eq!(e.vector.len(), 7);
        }
    }

    #[test]
    fn particular_library_properties() {
        let g = ieee33();
        let lib = build_library(&g, &Placement::full(&g)).unwrap();
        let sigma: SwitchStatus = "11101".parse().unwrap();
        let cands = particular_library(&lib, &sigma);
        assert_eq!(cands.len(), 5);
        for cand in &cands {
            assert_eq!(cand.after.toggled(cand.breaker), sigma);
            let back = particular_library(&lib, &cand.after);
            let same = back.iter().find(|b| b.breaker == cand.breaker).unwrap();
            assert_eq!(same.signature, cand.signature);
            assert_eq!(same.after, sigma);
        }
    }

    #[test]
    fn particular_library_skips_disconnecting_toggles() {
        let g = Grid::new(
            vec![bus(1, true), bus(2, false), bus(3, false)],
            vec![
                (1, 2, c(1.0, 0.0), None),
                (2, 3, c(1.0, 0.0), Some(1)),
                (1, 3, c(1.0, 0.0), Some(2)),
            ],
            Base { kv: 1.0, mva: 1.0 },
        )
        .unwrap();
        let lib = build_library(&g, &Placement::full(&g)).unwrap();
        // Keys: breaker 1 needs breaker 2 closed and vice versa.
        assert_eq!(lib.len(), 2);
        let cands = particular_library(&lib, &"10".parse().unwrap());
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].breaker, 1);
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let g = ieee33();
        let lib = build_library(&g, &Placement::preset(&g, "P15").unwrap()).unwrap();
        let text = lib.to_json().unwrap();
        let back = SignatureLibrary::from_json(&text, &g).unwrap();
        assert_eq!(back, lib);
        for (a, b) in lib.entries().iter().zip(back.entries()) {
            for (x, y) in a.vector.iter().zip(&b.vector) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
    }

    #[test]
    fn cache_rejects_other_grid() {
        let g = ieee33();
        let lib = build_library(&g, &Placement::preset(&g, "P7").unwrap()).unwrap();
        let text = lib.to_json().unwrap();
        assert!(matches!(
            SignatureLibrary::from_json(&text, &triangle()),
            Err(Error::LibraryMismatch(_))
        ));
    }
}
