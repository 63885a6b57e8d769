//! Gold translation dictionaries and accuracy scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Source token → set of acceptable target tokens.
///
/// Besides the aggregated map the dictionary keeps its distinct
/// `(source, target)` pairs in file order, which is what training slices
/// are drawn from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GoldDictionary {
    entries: BTreeMap<String, BTreeSet<String>>,
    pairs: Vec<(String, String)>,
    direction: Option<String>,
}

impl GoldDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a dictionary from pairs; repeated pairs are kept once.
    pub fn from_pairs<I, S, T>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: Into<String>,
        T: Into<String>,
    {
        let mut d = Self::new();
        for (s, t) in pairs {
            d.insert(s.into(), t.into());
        }
        d
    }

    /// Returns `false` if the pair was already present.
    pub fn insert(&mut self, source: String, target: String) -> bool {
        let set = self.entries.entry(source.clone()).or_default();
        if !set.insert(target.clone()) {
            return false;
        }
        self.pairs.push((source, target));
        true
    }

    pub fn with_direction(mut self, label: impl Into<String>) -> Self {
        self.direction = Some(label.into());
        self
    }

    pub fn direction(&self) -> Option<&str> {
        self.direction.as_deref()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(file)
    }

    /// Parses `source<TAB>target` lines. Blank lines are skipped.
    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let mut d = Self::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::parse(lineno, e.to_string()))?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let (Some(s), Some(t), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(Error::parse(lineno, "expected `source<TAB>target`"));
            };
            let (s, t) = (s.trim(), t.trim());
            if s.is_empty() || t.is_empty() {
                return Err(Error::parse(lineno, "empty token"));
            }
            d.insert(s.to_owned(), t.to_owned());
        }
        Ok(d)
    }

    /// Number of distinct source tokens.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn gold(&self, source: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(source)
    }

    /// Source tokens in sorted order.
    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn entries(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.entries
    }

    /// Distinct pairs in insertion order.
    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn average_gold_size(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.pairs.len() as f64 / self.entries.len() as f64
    }

    /// Source tokens present in both dictionaries, sorted.
    pub fn overlapping_sources<'a>(&'a self, other: &GoldDictionary) -> Vec<&'a str> {
        self.sources().filter(|s| other.entries.contains_key(*s)).collect()
    }
}

/// Percentage of predictions whose target is one of the source's gold
/// targets.
pub fn accuracy_at_1(predictions: &BTreeMap<String, String>, gold: &GoldDictionary) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    let mut correct = 0usize;
    for (src, pred) in predictions {
        let set = gold
            .gold(src)
            .ok_or_else(|| Error::UnknownToken(src.clone()))?;
        if set.contains(pred) {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / predictions.len() as f64)
}

/// Half-open frequency-rank interval `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RankBin {
    pub lo: usize,
    pub hi: usize,
}

impl RankBin {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo >= hi {
            return Err(Error::InvalidArgument(format!("empty rank bin [{lo}, {hi})")));
        }
        Ok(RankBin { lo, hi })
    }

    pub fn contains(&self, rank: usize) -> bool {
        self.lo <= rank && rank < self.hi
    }
}

impl std::fmt::Display for RankBin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.lo, self.hi)
    }
}

impl std::str::FromStr for RankBin {
    type Err = Error;

    /// `lo-hi`, e.g. `1-5000`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad rank bin `{s}`, expected `lo-hi`"));
        let (lo, hi) = s.trim().split_once('-').ok_or_else(bad)?;
        let lo = lo.trim().parse().map_err(|_| bad())?;
        let hi = hi.trim().parse().map_err(|_| bad())?;
        RankBin::new(lo, hi)
    }
}

/// 1–5K, 5K–20K, 20K–50K, 50K–100K, 100K–200K.
pub fn default_bins() -> Vec<RankBin> {
    [(1, 5_000), (5_000, 20_000), (20_000, 50_000), (50_000, 100_000), (100_000, 200_000)]
        .into_iter()
        .map(|(lo, hi)| RankBin { lo, hi })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinAccuracy {
    /// `None` for the bucket of items outside every bin.
    pub bin: Option<RankBin>,
    pub count: usize,
    /// `None` when the bin holds no items.
    pub accuracy: Option<f64>,
}

/// Accuracy restricted to the items of each bin, followed by an
/// "unbinned" bucket for ranks outside all bins. An item falling in
/// several overlapping bins counts in each.
pub fn bin_accuracy<F>(
    predictions: &BTreeMap<String, String>,
    gold: &GoldDictionary,
    freq_rank: F,
    bins: &[RankBin],
) -> Result<Vec<BinAccuracy>>
where
    F: Fn(&str) -> Option<usize>,
{
    let mut counts = vec![(0usize, 0usize); bins.len() + 1];
    for (src, pred) in predictions {
        let set = gold
            .gold(src)
            .ok_or_else(|| Error::UnknownToken(src.clone()))?;
        let rank = freq_rank(src)
            .ok_or_else(|| Error::InvalidArgument(format!("no frequency rank for `{src}`")))?;
        let hit = set.contains(pred) as usize;
        let mut binned = false;
        for (b, c) in bins.iter().zip(counts.iter_mut()) {
            if b.contains(rank) {
                c.0 += 1;
                c.1 += hit;
                binned = true;
            }
        }
        if !binned {
            let last = counts.last_mut().expect("unbinned slot");
            last.0 += 1;
            last.1 += hit;
        }
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, (n, hits))| BinAccuracy {
            bin: bins.get(i).copied(),
            count: n,
            accuracy: (n > 0).then(|| 100.0 * hits as f64 / n as f64),
        })
        .collect())
}

/// Checks that no source token appears in both dictionaries.
pub fn check_disjoint(train: &GoldDictionary, test: &GoldDictionary) -> Result<()> {
    let overlap = train.overlapping_sources(test);
    if overlap.is_empty() {
        return Ok(());
    }
    let shown: Vec<&str> = overlap.iter().take(5).copied().collect();
    Err(Error::Config(format!(
        "{} source tokens appear in both train and test pairs (e.g. {})",
        overlap.len(),
        shown.join(", ")
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds(p: &[(&str, &str)]) -> BTreeMap<String, String> {
        p.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn aggregates_multiple_targets() {
        let d = GoldDictionary::read("car\tauto\ncar\tmacchina\ncar\tauto\n".as_bytes()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.gold("car").unwrap().len(), 2);
        assert_eq!(d.pairs().len(), 2);
        assert_eq!(d.average_gold_size(), 2.0);
    }

    #[test]
    fn empty_file_is_valid() {
        let d = GoldDictionary::read("".as_bytes()).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.average_gold_size(), 0.0);
    }

    #[test]
    fn space_delimiter_is_rejected_with_line() {
        let err = GoldDictionary::read("a\tb\ncar auto\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(GoldDictionary::read("a\tb\tc\n".as_bytes()).is_err());
        assert!(GoldDictionary::read("a\t\n".as_bytes()).is_err());
    }

    #[test]
    fn any_gold_counts() {
        let gold = GoldDictionary::from_pairs([("car", "auto"), ("car", "macchina")]);
        assert_eq!(accuracy_at_1(&preds(&[("car", "auto")]), &gold).unwrap(), 100.0);
        assert_eq!(accuracy_at_1(&preds(&[("car", "voiture")]), &gold).unwrap(), 0.0);
    }

    #[test]
    fn two_of_three() {
        let gold = GoldDictionary::from_pairs([("a", "x"), ("b", "y"), ("c", "z")]);
        let acc = accuracy_at_1(&preds(&[("a", "x"), ("b", "y"), ("c", "x")]), &gold).unwrap();
        assert!((acc - 66.667).abs() < 1e-3);
    }

    #[test]
    fn unknown_source_is_an_error() {
        let gold = GoldDictionary::from_pairs([("a", "x")]);
        assert!(matches!(
            accuracy_at_1(&preds(&[("b", "x")]), &gold),
            Err(Error::UnknownToken(_))
        ));
        assert!(accuracy_at_1(&BTreeMap::new(), &gold).is_err());
    }

    #[test]
    fn half_open_bins() {
        let bins = default_bins();
        assert!(bins[0].contains(3000));
        assert!(!bins[0].contains(5000));
        assert!(bins[1].contains(5000));
        assert_eq!("1-5000".parse::<RankBin>().unwrap(), bins[0]);
        assert!("5-5".parse::<RankBin>().is_err());
    }

    #[test]
    fn bin_breakdown() {
        let gold = GoldDictionary::from_pairs([("a", "x"), ("b", "y"), ("c", "z")]);
        let p = preds(&[("a", "x"), ("b", "q"), ("c", "z")]);
        let rank = |s: &str| Some(match s {
            "a" => 10,
            "b" => 6000,
            _ => 999_999,
        });
        let r = bin_accuracy(&p, &gold, rank, &default_bins()).unwrap();
        assert_eq!(r.len(), 6);
        assert_eq!(r[0].accuracy, Some(100.0));
        assert_eq!(r[1].accuracy, Some(0.0));
        assert_eq!(r[2].accuracy, None);
        assert_eq!((r[5].bin, r[5].count, r[5].accuracy), (None, 1, Some(100.0)));
    }

    #[test]
    fn single_bin_equals_overall() {
        let gold = GoldDictionary::from_pairs([("a", "x"), ("b", "y"), ("c", "z")]);
        let p = preds(&[("a", "x"), ("b", "q"), ("c", "z")]);
        let r = bin_accuracy(&p, &gold, |_| Some(7), &[RankBin::new(1, 100).unwrap()]).unwrap();
        assert_eq!(r[0].accuracy, Some(accuracy_at_1(&p, &gold).unwrap()));
        assert_eq!(r[1].count, 0);
    }

    #[test]
    fn disjointness() {
        let a = GoldDictionary::from_pairs([("a", "x"), ("b", "y")]);
        let b = GoldDictionary::from_pairs([("b", "z")]);
        assert!(matches!(check_disjoint(&a, &b), Err(Error::Config(_))));
        let c = GoldDictionary::from_pairs([("c", "y")]);
        check_disjoint(&a, &c).unwrap();
    }
}
