//! Data contracts and corpus preparation: record types for the three tasks,
//! JSONL loading with per-line validation, text cleaning, per-source pruning,
//! and LOF-based length-outlier filtering.

mod clean;
mod lof;

pub use clean::{clean_text, token_count, tokens};
pub use lof::{filter_length_outliers, lof_scores};

use crate::error::{Error, Result};
use crate::parallel;
use chrono::{Datelike, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// The six publisher-level news categories.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceType {
    Satire,
    Conspiracy,
    Propaganda,
    Neutral,
    BiasLeft,
    BiasRight,
}

impl SourceType {
    pub const ALL: [SourceType; 6] = [
        SourceType::Satire,
        SourceType::Conspiracy,
        SourceType::Propaganda,
        SourceType::Neutral,
        SourceType::BiasLeft,
        SourceType::BiasRight,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SourceType::Satire => "satire",
            SourceType::Conspiracy => "conspiracy",
            SourceType::Propaganda => "propaganda",
            SourceType::Neutral => "neutral",
            SourceType::BiasLeft => "bias_left",
            SourceType::BiasRight => "bias_right",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| {
                Error::validation(
                    "source_type",
                    format!("unknown value `{s}`, expected one of satire, conspiracy, propaganda, neutral, bias_left, bias_right"),
                )
            })
    }
}

impl fmt::Display for SourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Three-way checkworthiness label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClaimLabel {
    NFS,
    UFS,
    CFS,
}

impl ClaimLabel {
    pub const ALL: [ClaimLabel; 3] = [ClaimLabel::NFS, ClaimLabel::UFS, ClaimLabel::CFS];

    pub fn as_str(&self) -> &'static str {
        match self {
            ClaimLabel::NFS => "NFS",
            ClaimLabel::UFS => "UFS",
            ClaimLabel::CFS => "CFS",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| {
                Error::validation("label", format!("unknown value `{s}`, expected NFS, UFS or CFS"))
            })
    }
}

impl fmt::Display for ClaimLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which published side of the claim dataset a statement belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Test,
}

/// One labeled news article.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewsArticle {
    pub id: String,
    pub title: String,
    pub body: String,
    pub source: String,
    pub source_type: SourceType,
    pub published: NaiveDate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subreddit: Option<String>,
}

impl NewsArticle {
    pub fn year(&self) -> i32 {
        self.published.year()
    }

    pub fn month(&self) -> u32 {
        self.published.month()
    }
}

/// One claim-detection statement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClaimStatement {
    pub text: String,
    pub label: ClaimLabel,
    pub split: SplitTag,
    /// Optional precomputed per-sentence annotation features (POS, entity,
    /// sentiment scores produced by an external tagger). Appended to the
    /// tf-idf features by the claim baseline when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotations: Option<Vec<f64>>,
}

/// One multiple-choice commonsense question.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CSQAItem {
    pub question: String,
    pub choices: Vec<String>,
    pub answer_index: usize,
}

// Raw mirrors deserialize leniently so schema violations can be reported with
// the offending field name instead of a serde position.

#[derive(Deserialize)]
struct RawArticle {
    id: String,
    title: String,
    body: String,
    source: String,
    source_type: String,
    published: String,
    #[serde(default)]
    subreddit: Option<String>,
}

#[derive(Deserialize)]
struct RawClaim {
    text: String,
    label: String,
    split: String,
    #[serde(default)]
    annotations: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawCsqa {
    question: String,
    choices: Vec<String>,
    answer_index: usize,
}

/// A record type that can be read from one line of a JSONL file.
pub trait JsonlRecord: Sized + Serialize {
    fn from_json_line(line: &str) -> Result<Self>;
}

impl JsonlRecord for NewsArticle {
    fn from_json_line(line: &str) -> Result<Self> {
        let raw: RawArticle = parse_json(line)?;
        if raw.id.trim().is_empty() {
            return Err(Error::validation("id", "must be non-empty"));
        }
        let source_type = SourceType::parse(&raw.source_type)?;
        let published = NaiveDate::parse_from_str(&raw.published, "%Y-%m-%d").map_err(|e| {
            Error::validation("published", format!("`{}` is not a YYYY-MM-DD date: {e}", raw.published))
        })?;
        if clean_text(&raw.title).is_empty() {
            return Err(Error::validation("title", "empty after cleaning"));
        }
        if clean_text(&raw.body).is_empty() {
            return Err(Error::validation("body", "empty after cleaning"));
        }
        Ok(NewsArticle {
            id: raw.id,
            title: raw.title,
            body: raw.body,
            source: raw.source.to_lowercase(),
            source_type,
            published,
            subreddit: raw.subreddit,
        })
    }
}

impl JsonlRecord for ClaimStatement {
    fn from_json_line(line: &str) -> Result<Self> {
        let raw: RawClaim = parse_json(line)?;
        let label = ClaimLabel::parse(&raw.label)?;
        let split = match raw.split.as_str() {
            "train" => SplitTag::Train,
            "test" => SplitTag::Test,
            other => {
                return Err(Error::validation(
                    "split",
                    format!("unknown value `{other}`, expected train or test"),
                ))
            }
        };
        if clean_text(&raw.text).is_empty() {
            return Err(Error::validation("text", "empty after cleaning"));
        }
        Ok(ClaimStatement {
            text: raw.text,
            label,
            split,
            annotations: raw.annotations,
        })
    }
}

impl JsonlRecord for CSQAItem {
    fn from_json_line(line: &str) -> Result<Self> {
        let raw: RawCsqa = parse_json(line)?;
        if raw.choices.len() < 2 || raw.choices.len() > 8 {
            return Err(Error::validation(
                "choices",
                format!("expected 2..=8 choices, got {}", raw.choices.len()),
            ));
        }
        if raw.choices.iter().any(|c| clean_text(c).is_empty()) {
            return Err(Error::validation("choices", "every choice must be non-empty"));
        }
        if raw.answer_index >= raw.choices.len() {
            return Err(Error::validation(
                "answer_index",
                format!("index {} out of range for {} choices", raw.answer_index, raw.choices.len()),
            ));
        }
        if clean_text(&raw.question).is_empty() {
            return Err(Error::validation("question", "empty after cleaning"));
        }
        Ok(CSQAItem {
            question: raw.question,
            choices: raw.choices,
            answer_index: raw.answer_index,
        })
    }
}

fn parse_json<'a, T: Deserialize<'a>>(line: &'a str) -> Result<T> {
    serde_json::from_str(line).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })
}

/// Loads a JSONL file (one object per line, empty lines skipped), validating
/// each record. Errors carry 1-based line numbers.
pub fn load_jsonl<R: JsonlRecord>(path: impl AsRef<Path>) -> Result<Vec<R>> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = R::from_json_line(&line).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                line: i + 1,
                message,
            },
            other => other.at_line(i + 1),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Writes records as JSONL, one compact object per line.
pub fn write_jsonl<R: Serialize>(path: impl AsRef<Path>, records: &[R]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Drops sources with fewer than `min_per_source` articles and uniformly
/// down-samples sources with more than `cap_per_source` to exactly the cap.
/// Relative article order is preserved; the down-sample is seeded per source
/// so results do not depend on map iteration order.
pub fn prune_sources(
    articles: &[NewsArticle],
    min_per_source: usize,
    cap_per_source: usize,
    seed: u64,
) -> Result<Vec<NewsArticle>> {
    if min_per_source < 1 {
        return Err(Error::domain("min_per_source must be >= 1"));
    }
    if cap_per_source < min_per_source {
        return Err(Error::domain("cap_per_source must be >= min_per_source"));
    }
    let mut by_source: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, a) in articles.iter().enumerate() {
        by_source.entry(a.source.as_str()).or_default().push(i);
    }
    let mut keep = vec![false; articles.len()];
    for (source, indices) in &by_source {
        if indices.len() < min_per_source {
            continue;
        }
        if indices.len() <= cap_per_source {
            for &i in indices {
                keep[i] = true;
            }
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(source.as_bytes()));
            let mut chosen =
                rand::seq::index::sample(&mut rng, indices.len(), cap_per_source).into_vec();
            chosen.sort_unstable();
            for pos in chosen {
                keep[indices[pos]] = true;
            }
        }
    }
    Ok(articles
        .iter()
        .enumerate()
        .filter(|(i, _)| keep[*i])
        .map(|(_, a)| a.clone())
        .collect())
}

/// Per-category corpus statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeStats {
    pub articles: usize,
    pub sources: usize,
    /// Mean whitespace-token count of cleaned bodies, rounded to 2 decimals.
    pub mean_body_tokens: Option<f64>,
    /// Mean whitespace-token count of cleaned titles, rounded to 2 decimals.
    pub mean_title_tokens: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    /// One row per category, in taxonomy order.
    pub rows: Vec<(SourceType, TypeStats)>,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Computes per-category article counts, distinct source counts, and mean
/// token lengths of cleaned titles and bodies.
pub fn corpus_stats(articles: &[NewsArticle]) -> CorpusStats {
    let counts: Vec<(usize, usize)> =
        parallel::map_slice(articles, |a| (token_count(&clean_text(&a.body)), token_count(&clean_text(&a.title))));
    let mut rows = Vec::with_capacity(SourceType::ALL.len());
    for ty in SourceType::ALL {
        let mut n = 0usize;
        let mut body_total = 0usize;
        let mut title_total = 0usize;
        let mut sources: Vec<&str> = Vec::new();
        for (a, (body_tokens, title_tokens)) in articles.iter().zip(&counts) {
            if a.source_type != ty {
                continue;
            }
            n += 1;
            body_total += body_tokens;
            title_total += title_tokens;
            sources.push(a.source.as_str());
        }
        sources.sort_unstable();
        sources.dedup();
        let stats = TypeStats {
            articles: n,
            sources: sources.len(),
            mean_body_tokens: (n > 0).then(|| round2(body_total as f64 / n as f64)),
            mean_title_tokens: (n > 0).then(|| round2(title_total as f64 / n as f64)),
        };
        rows.push((ty, stats));
    }
    CorpusStats { rows }
}

impl CorpusStats {
    /// CSV rendering: one row per category plus a header; absent means are
    /// empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("source_type,articles,sources,mean_body_tokens,mean_title_tokens\n");
        for (ty, s) in &self.rows {
            let body = s.mean_body_tokens.map(|m| format!("{m:.2}")).unwrap_or_default();
            let title = s.mean_title_tokens.map(|m| format!("{m:.2}")).unwrap_or_default();
            out.push_str(&format!("{},{},{},{},{}\n", ty, s.articles, s.sources, body, title));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::article;

    fn write_lines(lines: &[&str]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn loads_valid_article_file() {
        let f = write_lines(&[
            r#"{"id":"a1","title":"T one","body":"B one","source":"x.com","source_type":"satire","published":"2018-01-02"}"#,
            r#"{"id":"a2","title":"T two","body":"B two","source":"y.com","source_type":"neutral","published":"2019-03-04","subreddit":"news"}"#,
            r#"{"id":"a3","title":"T three","body":"B three","source":"z.com","source_type":"bias_left","published":"2017-11-30"}"#,
        ]);
        let articles: Vec<NewsArticle> = load_jsonl(f.path()).unwrap();
        assert_eq!(articles.len(), 3);
        assert_eq!(articles[0].id, "a1");
        assert_eq!(articles[1].subreddit.as_deref(), Some("news"));
        assert_eq!(articles[2].source_type, SourceType::BiasLeft);
    }

    #[test]
    fn unknown_source_type_names_field() {
        let f = write_lines(&[
            r#"{"id":"a1","title":"T","body":"B","source":"x.com","source_type":"hoax","published":"2018-01-02"}"#,
        ]);
        let err = load_jsonl::<NewsArticle>(f.path()).unwrap_err();
        match err {
            Error::Validation { line, field, .. } => {
                assert_eq!(line, Some(1));
                assert_eq!(field, "source_type");
            }
            other => panic!("expected validation error, got {other}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_lines(&[
            r#"{"id":"a1","title":"T","body":"B","source":"x.com","source_type":"satire","published":"2018-01-02"}"#,
            "{not json",
        ]);
        let err = load_jsonl::<NewsArticle>(f.path()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn empty_file_is_empty_list() {
        let f = write_lines(&[]);
        let articles: Vec<NewsArticle> = load_jsonl(f.path()).unwrap();
        assert!(articles.is_empty());
    }

    #[test]
    fn claim_and_csqa_validation() {
        let f = write_lines(&[r#"{"text":"Some claim.","label":"XFS","split":"train"}"#]);
        assert!(matches!(
            load_jsonl::<ClaimStatement>(f.path()).unwrap_err(),
            Error::Validation { field, .. } if field == "label"
        ));
        let f = write_lines(&[r#"{"question":"Q?","choices":["a","b"],"answer_index":2}"#]);
        assert!(matches!(
            load_jsonl::<CSQAItem>(f.path()).unwrap_err(),
            Error::Validation { field, .. } if field == "answer_index"
        ));
    }

    #[test]
    fn jsonl_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.jsonl");
        let mut articles = vec![
            article("a1", "x.com", SourceType::Satire, "2018-01-02"),
            article("a2", "y.com", SourceType::Conspiracy, "2019-06-07"),
        ];
        articles[1].subreddit = Some("conspiracy".into());
        write_jsonl(&path, &articles).unwrap();
        let back: Vec<NewsArticle> = load_jsonl(&path).unwrap();
        assert_eq!(back, articles);

        let claims = vec![ClaimStatement {
            text: "A claim.".into(),
            label: ClaimLabel::CFS,
            split: SplitTag::Test,
            annotations: Some(vec![0.25, 1.5]),
        }];
        let cpath = dir.path().join("c.jsonl");
        write_jsonl(&cpath, &claims).unwrap();
        let back: Vec<ClaimStatement> = load_jsonl(&cpath).unwrap();
        assert_eq!(back, claims);
    }

    #[test]
    fn prune_drops_small_and_caps_large_sources() {
        let mut articles = Vec::new();
        for i in 0..9 {
            articles.push(article(&format!("s{i}"), "small.com", SourceType::Satire, "2018-01-01"));
        }
        for i in 0..300 {
            articles.push(article(&format!("b{i}"), "big.com", SourceType::Neutral, "2018-01-01"));
        }
        for i in 0..40 {
            articles.push(article(&format!("m{i}"), "mid.com", SourceType::Satire, "2018-01-01"));
        }
        let pruned = prune_sources(&articles, 10, 250, 7).unwrap();
        assert!(pruned.iter().all(|a| a.source != "small.com"));
        assert_eq!(pruned.iter().filter(|a| a.source == "big.com").count(), 250);
        assert_eq!(pruned.iter().filter(|a| a.source == "mid.com").count(), 40);
        // relative order preserved
        let big_ids: Vec<&str> = pruned.iter().filter(|a| a.source == "big.com").map(|a| a.id.as_str()).collect();
        let mut sorted = big_ids.clone();
        sorted.sort_by_key(|id| id[1..].parse::<usize>().unwrap());
        assert_eq!(big_ids, sorted);
    }

    #[test]
    fn prune_is_deterministic_under_seed() {
        let articles: Vec<NewsArticle> = (0..300)
            .map(|i| article(&format!("b{i}"), "big.com", SourceType::Neutral, "2018-01-01"))
            .collect();
        let a = prune_sources(&articles, 10, 250, 42).unwrap();
        let b = prune_sources(&articles, 10, 250, 42).unwrap();
        assert_eq!(a, b);
        let c = prune_sources(&articles, 10, 250, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn stats_counts_and_means() {
        let mut a1 = article("a1", "x.com", SourceType::Satire, "2018-01-01");
        a1.body = (0..10).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let mut a2 = article("a2", "y.com", SourceType::Satire, "2018-01-01");
        a2.body = (0..20).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let stats = corpus_stats(&[a1, a2]);
        let satire = &stats.rows[0];
        assert_eq!(satire.0, SourceType::Satire);
        assert_eq!(satire.1.articles, 2);
        assert_eq!(satire.1.sources, 2);
        assert_eq!(satire.1.mean_body_tokens, Some(15.00));
    }

    #[test]
    fn stats_empty_input() {
        let stats = corpus_stats(&[]);
        assert_eq!(stats.rows.len(), 6);
        for (_, s) in &stats.rows {
            assert_eq!(s.articles, 0);
            assert!(s.mean_body_tokens.is_none());
        }
        let csv = stats.to_csv();
        assert!(csv.starts_with("source_type,articles"));
        assert_eq!(csv.lines().count(), 7);
    }
}
