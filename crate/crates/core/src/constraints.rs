//! Must-link / do-not-link pair sampling.
//!
//! A constraint `(i, j, y)` says samples `i` and `j` are similar (`y = 0`,
//! same label) or dissimilar (`y = 1`, different labels). Pairs are stored
//! canonically as `(min, max)` and never repeat.

use std::collections::HashSet;
use std::io::{Read, Write};

use log::warn;
use rand::seq::index;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::seed;

pub const SIMILAR: u8 = 0;
pub const DISSIMILAR: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConstraintSet {
    pairs: Vec<(usize, usize)>,
    targets: Vec<u8>,
    notes: Vec<String>,
}

impl ConstraintSet {
    /// Validates and canonicalizes explicit constraints.
    pub fn from_parts(pairs: Vec<(usize, usize)>, targets: Vec<u8>) -> Result<Self> {
        if pairs.len() != targets.len() {
            return Err(Error::DimensionMismatch { expected: pairs.len(), found: targets.len() });
        }
        let mut out = ConstraintSet::default();
        let mut seen = HashSet::with_capacity(pairs.len());
        for (&(i, j), &y) in pairs.iter().zip(&targets) {
            if i == j {
                return Err(Error::InvalidArgument(format!("pair ({i}, {j}) joins a sample to itself")));
            }
            if y > 1 {
                return Err(Error::InvalidArgument(format!("target {y} is not 0 or 1")));
            }
            let key = (i.min(j), i.max(j));
            if !seen.insert(key) {
                return Err(Error::InvalidArgument(format!("pair ({i}, {j}) appears twice")));
            }
            out.pairs.push(key);
            out.targets.push(y);
        }
        Ok(out)
    }

    /// Constraints for `pairs` with targets read off the labels of `data`.
    pub fn from_labels(data: &Dataset, pairs: Vec<(usize, usize)>) -> Result<Self> {
        if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i.max(j) >= data.len()) {
            return Err(Error::InvalidArgument(format!("pair ({i}, {j}) indexes past {} samples", data.len())));
        }
        let targets = pairs.iter().map(|&(i, j)| target_for(data, i, j)).collect();
        Self::from_parts(pairs, targets)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn targets(&self) -> &[u8] {
        &self.targets
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), u8)> + '_ {
        self.pairs.iter().copied().zip(self.targets.iter().copied())
    }

    pub fn similar_count(&self) -> usize {
        self.targets.iter().filter(|&&y| y == SIMILAR).count()
    }

    pub fn dissimilar_count(&self) -> usize {
        self.len() - self.similar_count()
    }

    /// Warnings produced while sampling (e.g. classes skipped for having a
    /// single member).
    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    /// Largest sample index referenced, if any.
    pub fn max_index(&self) -> Option<usize> {
        self.pairs.iter().map(|&(_, j)| j).max()
    }

    /// Rewrites every index through `map` (e.g. partition-local to global ids).
    pub fn remap(&self, map: &[usize]) -> Vec<(usize, usize)> {
        self.pairs.iter().map(|&(i, j)| (map[i], map[j])).collect()
    }

    /// Writes the `i,j,y` audit CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "j", "y"])?;
        for ((i, j), y) in self.iter() {
            w.write_record(&[i.to_string(), j.to_string(), y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut pairs = Vec::new();
        let mut targets = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::RaggedRow { row, expected: 3, found: rec.len() });
            }
            let field = |c: usize| -> Result<usize> {
                rec[c].parse().map_err(|_| Error::NonNumeric { row, column: c, value: rec[c].to_owned() })
            };
            pairs.push((field(0)?, field(1)?));
            let y = field(2)?;
            targets.push(u8::try_from(y).map_err(|_| Error::InvalidArgument(format!("target {y} is not 0 or 1")))?);
        }
        Self::from_parts(pairs, targets)
    }

    fn push(&mut self, i: usize, j: usize, y: u8) {
        self.pairs.push((i.min(j), i.max(j)));
        self.targets.push(y);
    }
}

fn target_for(data: &Dataset, i: usize, j: usize) -> u8 {
    if data.label(i) == data.label(j) {
        SIMILAR
    } else {
        DISSIMILAR
    }
}

/// Index `rank` in the lexicographic enumeration of 2-subsets `{a < b}` of `0..n`.
fn unrank_pair(mut rank: usize, n: usize) -> (usize, usize) {
    let mut a = 0;
    loop {
        let row = n - 1 - a;
        if rank < row {
            return (a, a + 1 + rank);
        }
        rank -= row;
        a += 1;
    }
}

fn choose2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Draws, for every class, up to `pos_per_class` same-class pairs and up to
/// `neg_per_class` pairs joining the class to any other class, uniformly and
/// without replacement. An exhausted population is taken whole.
///
/// A cross-class pair counts toward the first class that draws it; later
/// classes draw from the pairs not yet taken.
pub fn sample_per_class(
    data: &Dataset,
    pos_per_class: usize,
    neg_per_class: usize,
    seed: u64,
) -> Result<ConstraintSet> {
    if data.class_count() < 2 && neg_per_class > 0 {
        return Err(Error::SingleClass);
    }
    let members = data.class_members();
    let mut rng = seed::rng(seed);
    let mut out = ConstraintSet::default();
    let mut taken_neg: HashSet<(usize, usize)> = HashSet::new();

    for (class, inside) in members.iter().enumerate() {
        if inside.is_empty() {
            continue;
        }
        if inside.len() < 2 {
            if pos_per_class > 0 {
                let note = format!("class {class} has a single member; no must-link pairs drawn for it");
                warn!("{note}");
                out.notes.push(note);
            }
        } else {
            let population = choose2(inside.len());
            let amount = pos_per_class.min(population);
            for rank in index::sample(&mut rng, population, amount) {
                let (a, b) = unrank_pair(rank, inside.len());
                out.push(inside[a], inside[b], SIMILAR);
            }
        }

        if neg_per_class == 0 {
            continue;
        }
        let outside: Vec<usize> = (0..data.len()).filter(|&i| data.label(i) != class).collect();
        let population = inside.len() * outside.len();
        let touching = taken_neg
            .iter()
            .filter(|&&(i, j)| data.label(i) == class || data.label(j) == class)
            .count();
        let available = population - touching;
        let amount = neg_per_class.min(available);
        if amount == 0 {
            continue;
        }
        // A fully shuffled draw of `amount + touching` distinct pairs is certain
        // to contain `amount` pairs not taken yet; keeping the first of them in
        // draw order is a uniform draw from the remaining population.
        let draw = index::sample(&mut rng, population, (amount + touching).min(population));
        let mut kept = 0;
        for rank in draw {
            if kept == amount {
                break;
            }
            let (i, j) = (inside[rank / outside.len()], outside[rank % outside.len()]);
            let key = (i.min(j), i.max(j));
            if taken_neg.insert(key) {
                out.push(i, j, DISSIMILAR);
                kept += 1;
            }
        }
    }

    if pos_per_class > 0 && out.similar_count() == 0 {
        return Err(Error::NoPositives);
    }
    Ok(out)
}

/// Draws `⌈pos_fraction · P⌉` of the P same-label pairs and `⌈neg_fraction · D⌉`
/// of the D different-label pairs, uniformly without replacement.
pub fn sample_fraction(
    data: &Dataset,
    pos_fraction: f64,
    neg_fraction: f64,
    seed: u64,
) -> Result<ConstraintSet> {
    for f in [pos_fraction, neg_fraction] {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidArgument(format!("fraction {f} is outside (0, 1]")));
        }
    }
    let members = data.class_members();
    let mut rng = seed::rng(seed);
    let mut out = ConstraintSet::default();

    let pos_blocks: Vec<usize> = members.iter().map(|m| choose2(m.len())).collect();
    let pos_total: usize = pos_blocks.iter().sum();
    for rank in index::sample(&mut rng, pos_total, fraction_count(pos_fraction, pos_total)) {
        let (class, offset) = locate(&pos_blocks, rank);
        let (a, b) = unrank_pair(offset, members[class].len());
        out.push(members[class][a], members[class][b], SIMILAR);
    }

    let mut neg_blocks = Vec::new();
    let mut block_classes = Vec::new();
    for a in 0..members.len() {
        for b in a + 1..members.len() {
            neg_blocks.push(members[a].len() * members[b].len());
            block_classes.push((a, b));
        }
    }
    let neg_total: usize = neg_blocks.iter().sum();
    for rank in index::sample(&mut rng, neg_total, fraction_count(neg_fraction, neg_total)) {
        let (block, offset) = locate(&neg_blocks, rank);
        let (ca, cb) = block_classes[block];
        let width = members[cb].len();
        out.push(members[ca][offset / width], members[cb][offset % width], DISSIMILAR);
    }

    if pos_total == 0 {
        let note = "no class has two members; no must-link pairs drawn".to_owned();
        warn!("{note}");
        out.notes.push(note);
    }
    Ok(out)
}

/// `⌈fraction · population⌉`, ignoring rounding noise in the product.
fn fraction_count(fraction: f64, population: usize) -> usize {
    if population == 0 {
        return 0;
    }
    let raw = (fraction * population as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(population)
}

fn locate(blocks: &[usize], mut rank: usize) -> (usize, usize) {
    for (b, &size) in blocks.iter().enumerate() {
        if rank < size {
            return (b, rank);
        }
        rank -= size;
    }
    unreachable!("rank beyond population")
}
