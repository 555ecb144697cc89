//! Evaluation partitions over the news corpus.
//!
//! Two protocols are supported. The *forecasting* protocol trains on a
//! year window and tests on the cutoff year, simulating prediction on
//! future articles. The *unseen-source* protocol holds out whole sources
//! per class so the test side contains only outlets never seen in
//! training; it is repeated several times with shuffled source
//! assignments. A [`FoldPlan`] captures one such partition as id lists,
//! which serialize to JSONL so experiments are replayable.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{JsonlRecord, NewsArticle, SourceType};
use crate::{Error, Result};

/// Which partitioning protocol produced a fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitProtocol {
    Forecasting,
    UnseenSource,
}

impl std::fmt::Display for SplitProtocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SplitProtocol::Forecasting => f.write_str("forecasting"),
            SplitProtocol::UnseenSource => f.write_str("unseen_source"),
        }
    }
}

/// One train/test partition. Ids are article ids in corpus order, so a
/// plan built twice from the same inputs is byte-identical on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub protocol: SplitProtocol,
    pub fold_index: usize,
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl FoldPlan {
    /// Check the structural invariants: both sides non-empty, no id on
    /// both sides, no duplicate ids within a side.
    pub fn validate(&self) -> Result<()> {
        if self.train_ids.is_empty() {
            return Err(Error::Protocol("fold has an empty train side".into()));
        }
        if self.test_ids.is_empty() {
            return Err(Error::Protocol("fold has an empty test side".into()));
        }
        let train: HashSet<&str> = self.train_ids.iter().map(String::as_str).collect();
        let test: HashSet<&str> = self.test_ids.iter().map(String::as_str).collect();
        if train.len() != self.train_ids.len() || test.len() != self.test_ids.len() {
            return Err(Error::Protocol("fold contains duplicate ids".into()));
        }
        if let Some(id) = train.intersection(&test).next() {
            return Err(Error::Protocol(format!(
                "article `{id}` appears on both sides of the fold"
            )));
        }
        Ok(())
    }
}

impl JsonlRecord for FoldPlan {
    fn from_json_line(line: &str) -> Result<Self> {
        let plan: FoldPlan = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        plan.validate()?;
        Ok(plan)
    }
}

/// Train on `[window_start_year, cutoff_year)`, test on `cutoff_year`.
/// Articles outside the window are dropped entirely.
pub fn forecasting_split(
    articles: &[NewsArticle],
    window_start_year: i32,
    cutoff_year: i32,
) -> Result<FoldPlan> {
    use chrono::Datelike;

    if window_start_year >= cutoff_year {
        return Err(Error::domain(format!(
            "window start {window_start_year} must precede cutoff {cutoff_year}"
        )));
    }
    let mut train_ids = Vec::new();
    let mut test_ids = Vec::new();
    for article in articles {
        let year = article.published.year();
        if year >= window_start_year && year < cutoff_year {
            train_ids.push(article.id.clone());
        } else if year == cutoff_year {
            test_ids.push(article.id.clone());
        }
    }
    if train_ids.is_empty() {
        return Err(Error::Protocol(format!(
            "no articles published in [{window_start_year}, {cutoff_year}) to train on"
        )));
    }
    if test_ids.is_empty() {
        return Err(Error::Protocol(format!(
            "no articles published in {cutoff_year} to test on"
        )));
    }
    Ok(FoldPlan {
        protocol: SplitProtocol::Forecasting,
        fold_index: 0,
        seed: 0,
        train_ids,
        test_ids,
    })
}

/// Default year window for the forecasting protocol.
pub const FORECAST_WINDOW_START: i32 = 2015;
/// Default cutoff (test) year for the forecasting protocol.
pub const FORECAST_CUTOFF: i32 = 2019;

/// Bucket test articles by publish month of `year`. All twelve months
/// are present, empty ones with empty lists.
pub fn monthly_buckets(
    articles: &[NewsArticle],
    year: i32,
) -> Result<BTreeMap<u32, Vec<String>>> {
    use chrono::Datelike;

    let mut buckets: BTreeMap<u32, Vec<String>> = (1..=12).map(|m| (m, Vec::new())).collect();
    for article in articles {
        if article.published.year() != year {
            return Err(Error::domain(format!(
                "article `{}` published {} falls outside {year}",
                article.id, article.published
            )));
        }
        buckets
            .get_mut(&article.published.month())
            .expect("month is 1..=12")
            .push(article.id.clone());
    }
    Ok(buckets)
}

/// Hold out whole sources: per source type, a seeded shuffle sends
/// `floor(train_fraction · S)` sources (clamped so both sides keep at
/// least one) to train and the rest to test, repeated `repeats` times
/// with per-fold seed `seed ^ fold_index`.
pub fn unseen_source_folds(
    articles: &[NewsArticle],
    train_fraction: f64,
    repeats: usize,
    seed: u64,
) -> Result<Vec<FoldPlan>> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::domain(format!(
            "train fraction {train_fraction} must lie strictly between 0 and 1"
        )));
    }
    if repeats == 0 {
        return Err(Error::domain("at least one repeat is required"));
    }

    // Distinct sources per type, sorted so the shuffle input is stable.
    let mut by_type: BTreeMap<SourceType, BTreeSet<&str>> = BTreeMap::new();
    for article in articles {
        by_type
            .entry(article.source_type)
            .or_default()
            .insert(article.source.as_str());
    }
    if by_type.is_empty() {
        return Err(Error::domain("no articles to split"));
    }
    for (ty, sources) in &by_type {
        if sources.len() < 2 {
            return Err(Error::Protocol(format!(
                "source type `{ty}` has only {} source; need at least 2 to hold one out",
                sources.len()
            )));
        }
    }

    let folds = crate::parallel::map_range(repeats, |r| {
        let fold_seed = seed ^ r as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(fold_seed);
        let mut train_sources: HashSet<(SourceType, &str)> = HashSet::new();
        // Canonical type order keeps RNG consumption deterministic.
        for ty in SourceType::ALL {
            let Some(sources) = by_type.get(&ty) else {
                continue;
            };
            let mut shuffled: Vec<&str> = sources.iter().copied().collect();
            shuffled.shuffle(&mut rng);
            let n_train = ((train_fraction * sources.len() as f64).floor() as usize)
                .clamp(1, sources.len() - 1);
            for &source in &shuffled[..n_train] {
                train_sources.insert((ty, source));
            }
        }
        let mut train_ids = Vec::new();
        let mut test_ids = Vec::new();
        for article in articles {
            if train_sources.contains(&(article.source_type, article.source.as_str())) {
                train_ids.push(article.id.clone());
            } else {
                test_ids.push(article.id.clone());
            }
        }
        FoldPlan {
            protocol: SplitProtocol::UnseenSource,
            fold_index: r,
            seed: fold_seed,
            train_ids,
            test_ids,
        }
    });
    for fold in &folds {
        fold.validate()?;
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::article;

    fn dated(id: &str, date: &str) -> NewsArticle {
        article(id, "src", SourceType::Satire, date)
    }

    fn sourced(id: &str, ty: SourceType, source: &str) -> NewsArticle {
        article(id, source, ty, "2018-01-01")
    }

    #[test]
    fn forecasting_cutoff_rule() {
        let arts = vec![dated("a", "2018-05-01"), dated("b", "2019-01-02")];
        let plan = forecasting_split(&arts, FORECAST_WINDOW_START, FORECAST_CUTOFF).unwrap();
        assert_eq!(plan.train_ids, ["a"]);
        assert_eq!(plan.test_ids, ["b"]);
        assert_eq!(plan.protocol, SplitProtocol::Forecasting);
        assert_eq!(plan.fold_index, 0);
    }

    #[test]
    fn forecasting_drops_articles_outside_window() {
        let arts = vec![
            dated("old", "2014-12-31"),
            dated("in", "2015-01-01"),
            dated("late", "2020-03-01"),
            dated("test", "2019-06-01"),
        ];
        let plan = forecasting_split(&arts, 2015, 2019).unwrap();
        assert_eq!(plan.train_ids, ["in"]);
        assert_eq!(plan.test_ids, ["test"]);
    }

    #[test]
    fn forecasting_empty_train_is_protocol_error() {
        let arts = vec![dated("a", "2019-01-01"), dated("b", "2019-07-04")];
        let err = forecasting_split(&arts, 2015, 2019).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");
    }

    #[test]
    fn forecasting_empty_test_is_protocol_error() {
        let arts = vec![dated("a", "2016-01-01")];
        let err = forecasting_split(&arts, 2015, 2019).unwrap_err();
        assert!(matches!(err, Error::Protocol(_)), "{err}");
    }

    #[test]
    fn forecasting_rejects_inverted_window() {
        let arts = vec![dated("a", "2016-01-01")];
        assert!(matches!(
            forecasting_split(&arts, 2019, 2015),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn monthly_buckets_groups_and_fills_empty_months() {
        let arts = vec![
            dated("a", "2019-01-03"),
            dated("b", "2019-01-20"),
            dated("c", "2019-11-09"),
        ];
        let buckets = monthly_buckets(&arts, 2019).unwrap();
        assert_eq!(buckets.len(), 12);
        assert_eq!(buckets[&1], ["a", "b"]);
        assert_eq!(buckets[&11], ["c"]);
        assert!(buckets[&3].is_empty());
    }

    #[test]
    fn monthly_buckets_rejects_wrong_year() {
        let arts = vec![dated("a", "2018-12-31")];
        assert!(matches!(monthly_buckets(&arts, 2019), Err(Error::Domain(_))));
    }

    #[test]
    fn monthly_buckets_cover_exactly_the_input() {
        let arts: Vec<_> = (0..40)
            .map(|i| dated(&format!("a{i}"), &format!("2019-{:02}-15", i % 12 + 1)))
            .collect();
        let buckets = monthly_buckets(&arts, 2019).unwrap();
        let mut seen: Vec<&str> = buckets
            .values()
            .flat_map(|ids| ids.iter().map(String::as_str))
            .collect();
        seen.sort_unstable();
        let mut expected: Vec<&str> = arts.iter().map(|a| a.id.as_str()).collect();
        expected.sort_unstable();
        assert_eq!(seen, expected);
    }

    fn ten_source_corpus() -> Vec<NewsArticle> {
        let mut arts = Vec::new();
        for s in 0..10 {
            for i in 0..3 {
                arts.push(sourced(
                    &format!("sat-{s}-{i}"),
                    SourceType::Satire,
                    &format!("satire-source-{s}"),
                ));
            }
        }
        for s in 0..4 {
            arts.push(sourced(
                &format!("con-{s}"),
                SourceType::Conspiracy,
                &format!("conspiracy-source-{s}"),
            ));
        }
        arts
    }

    #[test]
    fn unseen_source_ninety_percent_of_ten_sources() {
        let arts = ten_source_corpus();
        let folds = unseen_source_folds(&arts, 0.9, 5, 13).unwrap();
        assert_eq!(folds.len(), 5);
        for (r, fold) in folds.iter().enumerate() {
            assert_eq!(fold.fold_index, r);
            assert_eq!(fold.seed, 13 ^ r as u64);
            let test_satire_sources: HashSet<&str> = arts
                .iter()
                .filter(|a| a.source_type == SourceType::Satire)
                .filter(|a| fold.test_ids.contains(&a.id))
                .map(|a| a.source.as_str())
                .collect();
            assert_eq!(test_satire_sources.len(), 1, "10 sources -> 1 held out");
        }
    }

    #[test]
    fn unseen_source_sides_share_no_source() {
        let arts = ten_source_corpus();
        for fold in unseen_source_folds(&arts, 0.9, 5, 99).unwrap() {
            fold.validate().unwrap();
            let source_of = |id: &String| {
                arts.iter()
                    .find(|a| &a.id == id)
                    .map(|a| (a.source_type, a.source.clone()))
                    .unwrap()
            };
            let train: HashSet<_> = fold.train_ids.iter().map(source_of).collect();
            let test: HashSet<_> = fold.test_ids.iter().map(source_of).collect();
            assert!(train.is_disjoint(&test));
            // Every source of every present type lands on exactly one side.
            assert_eq!(train.len() + test.len(), 14);
        }
    }

    #[test]
    fn unseen_source_is_deterministic() {
        let arts = ten_source_corpus();
        let a = unseen_source_folds(&arts, 0.9, 5, 7).unwrap();
        let b = unseen_source_folds(&arts, 0.9, 5, 7).unwrap();
        assert_eq!(a, b);
        let a_json: Vec<String> = a.iter().map(|f| serde_json::to_string(f).unwrap()).collect();
        let b_json: Vec<String> = b.iter().map(|f| serde_json::to_string(f).unwrap()).collect();
        assert_eq!(a_json, b_json);
    }

    #[test]
    fn unseen_source_single_source_type_is_protocol_error() {
        let arts = vec![
            sourced("a", SourceType::Satire, "only-one"),
            sourced("b", SourceType::Satire, "only-one"),
            sourced("c", SourceType::Neutral, "n1"),
            sourced("d", SourceType::Neutral, "n2"),
        ];
        let err = unseen_source_folds(&arts, 0.9, 2, 1).unwrap_err();
        match err {
            Error::Protocol(msg) => assert!(msg.contains("satire"), "{msg}"),
            other => panic!("expected protocol error, got {other}"),
        }
    }

    #[test]
    fn unseen_source_rejects_bad_fraction() {
        let arts = ten_source_corpus();
        assert!(matches!(
            unseen_source_folds(&arts, 1.0, 2, 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            unseen_source_folds(&arts, 0.0, 2, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn fold_plan_jsonl_round_trip() {
        let arts = ten_source_corpus();
        let folds = unseen_source_folds(&arts, 0.9, 3, 21).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("folds.jsonl");
        crate::corpus::write_jsonl(&path, &folds).unwrap();
        let loaded: Vec<FoldPlan> = crate::corpus::load_jsonl(&path).unwrap();
        assert_eq!(folds, loaded);
    }

    #[test]
    fn fold_plan_validation_catches_overlap() {
        let plan = FoldPlan {
            protocol: SplitProtocol::UnseenSource,
            fold_index: 0,
            seed: 0,
            train_ids: vec!["a".into(), "b".into()],
            test_ids: vec!["b".into()],
        };
        assert!(matches!(plan.validate(), Err(Error::Protocol(_))));
    }
}
