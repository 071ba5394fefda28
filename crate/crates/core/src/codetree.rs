//! Symbolic side of a Moran construction: words addressing cylinders,
//! level-indexed branching and contraction-ratio rules, cylinder diameters
//! in log space, and the symbolic metric on the codetree.

use std::borrow::Cow;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{MoranError, Result};

/// A finite branch-index sequence addressing a cylinder. Indices are
/// 1-based; the empty word is the root.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(Vec<u32>);

impl Word {
    pub fn root() -> Self {
        Word(Vec::new())
    }

    pub fn new(indices: Vec<u32>) -> Self {
        Word(indices)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    /// 1-based branch index at level `k` (1 <= k <= len).
    pub fn index_at(&self, k: usize) -> u32 {
        self.0[k - 1]
    }

    pub fn last(&self) -> Option<u32> {
        self.0.last().copied()
    }

    /// The word with its last symbol removed; the root has no parent.
    pub fn parent(&self) -> Option<Word> {
        if self.0.is_empty() {
            None
        } else {
            Some(Word(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    pub fn child(&self, index: u32) -> Word {
        let mut v = self.0.clone();
        v.push(index);
        Word(v)
    }

    /// Prefix of length `n` (n <= len).
    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n].to_vec())
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    /// Length of the longest common prefix with `other`.
    pub fn common_prefix_len(&self, other: &Word) -> usize {
        self.0
            .iter()
            .zip(other.0.iter())
            .take_while(|(a, b)| a == b)
            .count()
    }

    pub fn is_prefix_of(&self, other: &Word) -> bool {
        self.len() <= other.len() && self.0[..] == other.0[..self.len()]
    }
}

impl From<Vec<u32>> for Word {
    fn from(v: Vec<u32>) -> Self {
        Word(v)
    }
}

impl From<&[u32]> for Word {
    fn from(v: &[u32]) -> Self {
        Word(v.to_vec())
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "-");
        }
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join("."))
    }
}

/// Whether ratios depend on the branch index within a level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpecKind {
    /// c_{k,i} = c_k for all branch indices i.
    Homogeneous,
    /// c_{k,i} may depend on i but not on the word history.
    SpatiallySymmetric,
}

/// One level of the construction: the branching count is the number of
/// ratios, ratio `i` applies to the i-th offspring.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSpec {
    pub ratios: Vec<f64>,
}

impl LevelSpec {
    pub fn new(ratios: Vec<f64>) -> Self {
        LevelSpec { ratios }
    }

    pub fn branching(&self) -> usize {
        self.ratios.len()
    }
}

// Serialized form carries the branching count explicitly; it is checked
// against the ratio list on the way back in.
#[derive(Serialize, Deserialize)]
struct LevelSpecRepr {
    #[serde(rename = "N")]
    n: usize,
    ratios: Vec<f64>,
}

impl Serialize for LevelSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LevelSpecRepr { n: self.ratios.len(), ratios: self.ratios.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LevelSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = LevelSpecRepr::deserialize(d)?;
        if repr.n != repr.ratios.len() {
            return Err(D::Error::custom(format!(
                "level N = {} does not match {} ratios",
                repr.n,
                repr.ratios.len()
            )));
        }
        Ok(LevelSpec { ratios: repr.ratios })
    }
}

/// Named rule extending the construction beyond the explicit level prefix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum TailRule {
    /// Levels repeat the given block cyclically.
    Periodic { block: Vec<LevelSpec> },
    /// Tail levels are partitioned into blocks of lengths 1, 2, 4, 8, ...;
    /// odd-numbered blocks use `active`, even-numbered blocks use `idle`.
    DoublingBlocks { active: LevelSpec, idle: LevelSpec },
    /// c_{k,i} = base_i * exp(-decay_i * k) at absolute level k.
    LevelDecay { base: Vec<f64>, decay: Vec<f64> },
}

/// Symbolic parameters of a spatially symmetric Moran construction:
/// branching counts N_k and contraction ratios c_{k,i}, defined lazily for
/// every level k >= 1 by an explicit prefix plus a tail rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructionSpec {
    pub kind: SpecKind,
    pub root_diameter: f64,
    pub levels: Vec<LevelSpec>,
    pub tail: TailRule,
}

fn check_level(ratios: &[f64], what: &str) -> Result<()> {
    if ratios.is_empty() {
        return Err(MoranError::InvalidSpec(format!("{what}: offspring count must be >= 1")));
    }
    for &c in ratios {
        if !(c > 0.0 && c < 1.0) {
            return Err(MoranError::InvalidSpec(format!(
                "{what}: ratio {c} is not in (0, 1)"
            )));
        }
    }
    Ok(())
}

fn level_is_constant(ratios: &[f64]) -> bool {
    ratios.windows(2).all(|w| w[0] == w[1])
}

impl ConstructionSpec {
    /// Validated constructor. Checks ratio ranges for the explicit prefix
    /// and structurally for the tail rule; nothing is materialized.
    pub fn new(
        kind: SpecKind,
        root_diameter: f64,
        levels: Vec<LevelSpec>,
        tail: TailRule,
    ) -> Result<Self> {
        if !(root_diameter > 0.0 && root_diameter.is_finite()) {
            return Err(MoranError::InvalidSpec(format!(
                "root diameter {root_diameter} must be positive and finite"
            )));
        }
        for (i, level) in levels.iter().enumerate() {
            check_level(&level.ratios, &format!("level {}", i + 1))?;
        }
        let first_tail_level = levels.len() + 1;
        match &tail {
            TailRule::Periodic { block } => {
                if block.is_empty() {
                    return Err(MoranError::InvalidSpec("periodic tail block is empty".into()));
                }
                for (i, level) in block.iter().enumerate() {
                    check_level(&level.ratios, &format!("tail block level {}", i + 1))?;
                }
            }
            TailRule::DoublingBlocks { active, idle } => {
                check_level(&active.ratios, "doubling-blocks active level")?;
                check_level(&idle.ratios, "doubling-blocks idle level")?;
            }
            TailRule::LevelDecay { base, decay } => {
                if base.is_empty() || base.len() != decay.len() {
                    return Err(MoranError::InvalidSpec(
                        "level-decay tail needs matching nonempty base and decay lists".into(),
                    ));
                }
                for (&b, &d) in base.iter().zip(decay) {
                    if !(b > 0.0 && b.is_finite()) || !(d >= 0.0 && d.is_finite()) {
                        return Err(MoranError::InvalidSpec(
                            "level-decay tail needs base > 0 and decay >= 0".into(),
                        ));
                    }
                    // Ratios decrease in k, so the first tail level is the
                    // worst case for the c < 1 requirement.
                    let first = b * (-d * first_tail_level as f64).exp();
                    if first >= 1.0 {
                        return Err(MoranError::InvalidSpec(format!(
                            "level-decay ratio {first} at level {first_tail_level} is not < 1"
                        )));
                    }
                }
            }
        }
        let spec = ConstructionSpec { kind, root_diameter, levels, tail };
        if kind == SpecKind::Homogeneous && !spec.tail_and_prefix_constant() {
            return Err(MoranError::InvalidSpec(
                "homogeneous spec requires index-independent ratios at every level".into(),
            ));
        }
        Ok(spec)
    }

    fn tail_and_prefix_constant(&self) -> bool {
        let prefix_ok = self.levels.iter().all(|l| level_is_constant(&l.ratios));
        let tail_ok = match &self.tail {
            TailRule::Periodic { block } => block.iter().all(|l| level_is_constant(&l.ratios)),
            TailRule::DoublingBlocks { active, idle } => {
                level_is_constant(&active.ratios) && level_is_constant(&idle.ratios)
            }
            TailRule::LevelDecay { base, decay } => {
                base.windows(2).all(|w| w[0] == w[1]) && decay.windows(2).all(|w| w[0] == w[1])
            }
        };
        prefix_ok && tail_ok
    }

    /// Contraction ratios at level `k` (1-based).
    pub fn ratios(&self, k: usize) -> Cow<'_, [f64]> {
        assert!(k >= 1, "levels are 1-based");
        if k <= self.levels.len() {
            return Cow::Borrowed(&self.levels[k - 1].ratios);
        }
        let m = k - self.levels.len(); // 1-based tail index
        match &self.tail {
            TailRule::Periodic { block } => {
                Cow::Borrowed(&block[(m - 1) % block.len()].ratios)
            }
            TailRule::DoublingBlocks { active, idle } => {
                // Block b covers tail indices [2^(b-1), 2^b - 1].
                let b = usize::BITS - m.leading_zeros(); // floor(log2 m) + 1
                if b % 2 == 1 {
                    Cow::Borrowed(&active.ratios)
                } else {
                    Cow::Borrowed(&idle.ratios)
                }
            }
            TailRule::LevelDecay { base, decay } => Cow::Owned(
                base.iter()
                    .zip(decay)
                    .map(|(&b, &d)| b * (-d * k as f64).exp())
                    .collect(),
            ),
        }
    }

    /// Offspring count N_k at level `k`.
    pub fn branching(&self, k: usize) -> usize {
        self.ratios(k).len()
    }

    pub fn ratio(&self, k: usize, i: u32) -> f64 {
        self.ratios(k)[(i - 1) as usize]
    }

    /// Log contraction ratios at level `k`. For the level-decay tail the
    /// logs are formed symbolically as `ln b - d k`, which stays finite at
    /// depths where the ratio itself underflows f64 (k ~ 745 for e^-k).
    pub fn log_ratios(&self, k: usize) -> Vec<f64> {
        if k > self.levels.len() {
            if let TailRule::LevelDecay { base, decay } = &self.tail {
                return base
                    .iter()
                    .zip(decay)
                    .map(|(&b, &d)| b.ln() - d * k as f64)
                    .collect();
            }
        }
        self.ratios(k).iter().map(|&c| c.ln()).collect()
    }

    pub fn log_ratio(&self, k: usize, i: u32) -> f64 {
        self.log_ratios(k)[(i - 1) as usize]
    }

    pub fn validate_word(&self, word: &Word) -> Result<()> {
        for (pos, &i) in word.indices().iter().enumerate() {
            let k = pos + 1;
            let n = self.branching(k);
            if i < 1 || i as usize > n {
                return Err(MoranError::InvalidWord {
                    word: word.indices().to_vec(),
                    reason: format!("index {i} at level {k} outside 1..={n}"),
                });
            }
        }
        Ok(())
    }

    /// All offsprings of `word` in index order.
    pub fn offsprings(&self, word: &Word) -> Result<Vec<Word>> {
        self.validate_word(word)?;
        let n = self.branching(word.len() + 1);
        Ok((1..=n as u32).map(|i| word.child(i)).collect())
    }

    /// log(root_diameter) + sum of log ratios along the word.
    pub fn cylinder_log_diameter(&self, word: &Word) -> Result<f64> {
        self.validate_word(word)?;
        let mut d = self.root_diameter.ln();
        for (pos, &i) in word.indices().iter().enumerate() {
            d += self.log_ratio(pos + 1, i);
        }
        Ok(d)
    }

    /// Symbolic metric between the cylinder classes of two finite words:
    /// 1 when the first symbols differ, the product of ratios along the
    /// longest common prefix otherwise, and 0 when one word is a prefix of
    /// the other (cylinder containment is read as distance zero).
    pub fn rho_distance(&self, a: &Word, b: &Word) -> Result<f64> {
        self.validate_word(a)?;
        self.validate_word(b)?;
        let lcp = a.common_prefix_len(b);
        if lcp == a.len() || lcp == b.len() {
            return Ok(0.0);
        }
        if lcp == 0 {
            return Ok(1.0);
        }
        let mut prod = 1.0;
        for k in 1..=lcp {
            prod *= self.ratio(k, a.index_at(k));
        }
        Ok(prod)
    }

    /// Product of ratios along the whole word (the symbolic cylinder
    /// diameter of Lemma-style bookkeeping, in linear scale).
    pub fn cylinder_ratio_product(&self, word: &Word) -> Result<f64> {
        self.validate_word(word)?;
        let mut prod = 1.0;
        for k in 1..=word.len() {
            prod *= self.ratio(k, word.index_at(k));
        }
        Ok(prod)
    }

    pub fn min_ratio(&self, k: usize) -> f64 {
        self.ratios(k).iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_ratio(&self, k: usize) -> f64 {
        self.ratios(k).iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// All words at the given depth, lexicographic. Errors when the level
    /// has more than `cap` words.
    pub fn enumerate_level(&self, depth: usize, cap: usize) -> Result<Vec<Word>> {
        let mut words = vec![Word::root()];
        for k in 1..=depth {
            let n = self.branching(k);
            if words.len().saturating_mul(n) > cap {
                return Err(MoranError::InvalidArgument(format!(
                    "level {depth} exceeds the enumeration cap of {cap} words"
                )));
            }
            let mut next = Vec::with_capacity(words.len() * n);
            for w in &words {
                for i in 1..=n as u32 {
                    next.push(w.child(i));
                }
            }
            words = next;
        }
        Ok(words)
    }
}

/// A word together with its cylinder's log diameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderGeometry {
    pub word: Word,
    pub log_diameter: f64,
}

impl CylinderGeometry {
    pub fn of(spec: &ConstructionSpec, word: Word) -> Result<Self> {
        let log_diameter = spec.cylinder_log_diameter(&word)?;
        Ok(CylinderGeometry { word, log_diameter })
    }
}

/// Ready-made constructions used across tests, benches, and docs.
pub mod presets {
    use super::*;

    /// N_k = 2, c_{k,i} = 1/3 at every level.
    pub fn middle_thirds() -> ConstructionSpec {
        ConstructionSpec::new(
            SpecKind::Homogeneous,
            1.0,
            vec![],
            TailRule::Periodic { block: vec![LevelSpec::new(vec![1.0 / 3.0, 1.0 / 3.0])] },
        )
        .expect("valid preset")
    }

    /// N_k = 2 with ratios {1/2, 1/4} at every level.
    pub fn two_ratio() -> ConstructionSpec {
        ConstructionSpec::new(
            SpecKind::SpatiallySymmetric,
            1.0,
            vec![],
            TailRule::Periodic { block: vec![LevelSpec::new(vec![0.5, 0.25])] },
        )
        .expect("valid preset")
    }

    /// c_k = 1/2 everywhere; N_k = 2 on blocks of doubling length
    /// alternating with N_k = 1 blocks. Its dimension sequence oscillates,
    /// so the lower and upper limits differ.
    pub fn doubling_blocks() -> ConstructionSpec {
        ConstructionSpec::new(
            SpecKind::Homogeneous,
            1.0,
            vec![],
            TailRule::DoublingBlocks {
                active: LevelSpec::new(vec![0.5, 0.5]),
                idle: LevelSpec::new(vec![0.5]),
            },
        )
        .expect("valid preset")
    }

    /// Binary tree with c_{k,1} = e^-1 and c_{k,2} = e^-k: the entropy
    /// second-moment series has Theta(1) summands and diverges.
    pub fn entropy_divergence() -> ConstructionSpec {
        ConstructionSpec::new(
            SpecKind::SpatiallySymmetric,
            1.0,
            vec![],
            TailRule::LevelDecay { base: vec![(-1.0f64).exp(), 1.0], decay: vec![0.0, 1.0] },
        )
        .expect("valid preset")
    }
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;

    #[test]
    fn make_spec_examples() {
        // Middle thirds is valid.
        let mt = middle_thirds();
        assert_eq!(mt.branching(1), 2);
        assert_eq!(mt.ratio(5, 2), 1.0 / 3.0);

        // Ratio outside (0,1) rejected.
        let bad = ConstructionSpec::new(
            SpecKind::SpatiallySymmetric,
            1.0,
            vec![LevelSpec::new(vec![1.0, 0.5])],
            TailRule::Periodic { block: vec![LevelSpec::new(vec![0.5, 0.25])] },
        );
        assert!(matches!(bad, Err(MoranError::InvalidSpec(_))));

        // Two-ratio spec valid.
        let tr = two_ratio();
        assert_eq!(tr.ratio(3, 1), 0.5);
        assert_eq!(tr.ratio(3, 2), 0.25);

        // Homogeneous kind with index-dependent ratios rejected.
        let bad = ConstructionSpec::new(
            SpecKind::Homogeneous,
            1.0,
            vec![],
            TailRule::Periodic { block: vec![LevelSpec::new(vec![0.5, 0.25])] },
        );
        assert!(bad.is_err());

        // Empty level rejected.
        let bad = ConstructionSpec::new(
            SpecKind::SpatiallySymmetric,
            1.0,
            vec![LevelSpec::new(vec![])],
            TailRule::Periodic { block: vec![LevelSpec::new(vec![0.5])] },
        );
        assert!(bad.is_err());
    }

    #[test]
    fn offsprings_examples() {
        let mt = middle_thirds();
        let root = Word::root();
        assert_eq!(
            mt.offsprings(&root).unwrap(),
            vec![Word::from(vec![1]), Word::from(vec![2])]
        );
        assert_eq!(
            mt.offsprings(&Word::from(vec![1])).unwrap(),
            vec![Word::from(vec![1, 1]), Word::from(vec![1, 2])]
        );

        // N_2 = 3.
        let spec = ConstructionSpec::new(
            SpecKind::SpatiallySymmetric,
            1.0,
            vec![LevelSpec::new(vec![0.4, 0.4]), LevelSpec::new(vec![0.2, 0.2, 0.2])],
            TailRule::Periodic { block: vec![LevelSpec::new(vec![0.3, 0.3])] },
        )
        .unwrap();
        assert_eq!(spec.offsprings(&Word::from(vec![1])).unwrap().len(), 3);

        // Invalid word rejected.
        assert!(mt.offsprings(&Word::from(vec![3])).is_err());
    }

    #[test]
    fn cylinder_log_diameter_examples() {
        let mt = middle_thirds();
        assert_eq!(mt.cylinder_log_diameter(&Word::root()).unwrap(), 0.0);
        let d = mt.cylinder_log_diameter(&Word::from(vec![2, 1])).unwrap();
        assert!((d - 2.0 * (1.0f64 / 3.0).ln()).abs() < 1e-15);

        let tr = two_ratio();
        let d = tr.cylinder_log_diameter(&Word::from(vec![1, 2])).unwrap();
        assert!((d - (1.0f64 / 8.0).ln()).abs() < 1e-15);
    }

    #[test]
    fn log_diameter_recurrence_is_exact() {
        let tr = two_ratio();
        let word = Word::from(vec![1, 2, 2, 1, 2, 1, 1, 2]);
        for n in 1..=word.len() {
            let w = word.prefix(n);
            let parent = w.parent().unwrap();
            let step = tr.ratio(n, w.index_at(n)).ln();
            assert_eq!(
                tr.cylinder_log_diameter(&w).unwrap(),
                tr.cylinder_log_diameter(&parent).unwrap() + step
            );
        }
    }

    #[test]
    fn rho_distance_examples() {
        let mt = middle_thirds();
        let a = Word::from(vec![1, 2, 1]);
        assert_eq!(mt.rho_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(
            mt.rho_distance(&Word::from(vec![1, 1]), &Word::from(vec![2, 1])).unwrap(),
            1.0
        );
        let d = mt
            .rho_distance(&Word::from(vec![1, 2, 1]), &Word::from(vec![1, 2, 2]))
            .unwrap();
        assert!((d - 1.0 / 9.0).abs() < 1e-15);
        // Prefix containment reads as distance zero.
        assert_eq!(
            mt.rho_distance(&Word::from(vec![1, 2]), &Word::from(vec![1, 2, 1, 1])).unwrap(),
            0.0
        );
    }

    #[test]
    fn doubling_blocks_level_layout() {
        let spec = doubling_blocks();
        // Tail indices 1 | 2 3 | 4..7 | 8..15: active, idle, active, idle.
        assert_eq!(spec.branching(1), 2);
        assert_eq!(spec.branching(2), 1);
        assert_eq!(spec.branching(3), 1);
        assert_eq!(spec.branching(4), 2);
        assert_eq!(spec.branching(7), 2);
        assert_eq!(spec.branching(8), 1);
        assert_eq!(spec.branching(15), 1);
        assert_eq!(spec.branching(16), 2);
    }

    #[test]
    fn level_decay_ratios() {
        let spec = entropy_divergence();
        let r = spec.ratios(5);
        assert!((r[0] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((r[1] - (-5.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn spec_json_round_trip_is_bit_exact() {
        for spec in [middle_thirds(), two_ratio(), doubling_blocks(), entropy_divergence()] {
            let json = serde_json::to_string(&spec).unwrap();
            let back: ConstructionSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(spec, back);
            for k in 1..=20 {
                for (a, b) in spec.ratios(k).iter().zip(back.ratios(k).iter()) {
                    assert_eq!(a.to_bits(), b.to_bits());
                }
            }
            assert_eq!(json, serde_json::to_string(&back).unwrap());
        }
    }

    #[test]
    fn level_spec_serde_rejects_mismatched_count() {
        let bad = r#"{"N": 3, "ratios": [0.5, 0.25]}"#;
        assert!(serde_json::from_str::<LevelSpec>(bad).is_err());
    }
}
