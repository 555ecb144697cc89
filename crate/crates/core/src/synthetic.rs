//! Seeded generators for synthetic, strongly separable corpora.
//!
//! Every generator is deterministic under its seed and produces data
//! that already satisfies the corpus invariants (cleaned lowercase
//! text, valid dates, labels from the fixed taxonomies), so the output
//! can feed any pipeline stage directly or be written to JSONL for the
//! command-line tools. Class signal is lexical: each news category and
//! each claim class owns a keyword pool no other class uses, and
//! multiple-choice answers come from a pool distractors never draw
//! from. Classifiers that pick up token features separate these sets;
//! nothing else about the text is meaningful.

use chrono::NaiveDate;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{ClaimLabel, ClaimStatement, CSQAItem, NewsArticle, SourceType, SplitTag};

/// Keyword pools, one per news category in taxonomy order.
const NEWS_POOLS: [&[&str]; 6] = [
    &["chuckle", "parody", "spoof", "jest", "mockery", "absurd", "lampoon", "farce"],
    &["shadowy", "cabal", "coverup", "hidden", "scheme", "puppet", "sinister", "orchestrated"],
    &["glorious", "regime", "slogan", "unity", "banner", "decree", "loyal", "triumph"],
    &["bulletin", "council", "budget", "measured", "report", "hearing", "committee", "survey"],
    &["collective", "equity", "workers", "solidarity", "grassroots", "welfare", "commons", "union"],
    &["heritage", "liberty", "patriot", "founders", "tradition", "frontier", "homestead", "creed"],
];

/// Filler words shared by every category; they carry no class signal.
const FILLER: &[&str] = &[
    "the", "a", "of", "and", "to", "in", "that", "was", "for", "on", "with", "city", "people",
    "week", "year", "plan", "group", "local", "public", "story", "event", "meeting", "road",
    "school", "market", "river", "house", "office", "season", "morning",
];

fn date_in(rng: &mut ChaCha8Rng, first_year: i32, last_year: i32) -> NaiveDate {
    let year = rng.random_range(first_year..=last_year);
    let month = rng.random_range(1..=12);
    let day = rng.random_range(1..=28);
    NaiveDate::from_ymd_opt(year, month, day).expect("day <= 28 is always valid")
}

fn sentence(rng: &mut ChaCha8Rng, pool: &[&str], keywords: usize, fillers: usize) -> String {
    let mut words = Vec::with_capacity(keywords + fillers);
    for _ in 0..keywords {
        words.push(*pool.choose(rng).expect("pool is non-empty"));
    }
    for _ in 0..fillers {
        words.push(*FILLER.choose(rng).expect("filler list is non-empty"));
    }
    // Interleave deterministically so keywords are not all up front.
    let mut rotated = Vec::with_capacity(words.len());
    let offset = rng.random_range(0..words.len().max(1));
    for i in 0..words.len() {
        rotated.push(words[(i * 7 + offset) % words.len()]);
    }
    rotated.join(" ")
}

/// A balanced six-category news corpus: `sources_per_type` outlets per
/// category, articles dated 2015..=2019, titles and bodies built from
/// the per-category keyword pools plus shared filler.
pub fn news_corpus(n_articles: usize, sources_per_type: usize, seed: u64) -> Vec<NewsArticle> {
    assert!(sources_per_type >= 1, "need at least one source per type");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut articles = Vec::with_capacity(n_articles);
    for i in 0..n_articles {
        let ty = SourceType::ALL[i % SourceType::ALL.len()];
        let pool = NEWS_POOLS[i % SourceType::ALL.len()];
        let outlet = rng.random_range(0..sources_per_type);
        let source = format!("{}-{outlet}.example.com", ty.as_str().replace('_', "-"));
        let title = sentence(&mut rng, pool, 2, 6);
        let mut body = String::new();
        for s in 0..rng.random_range(3..=6usize) {
            if s > 0 {
                body.push(' ');
            }
            body.push_str(&sentence(&mut rng, pool, 2, 8));
        }
        articles.push(NewsArticle {
            id: format!("syn{i:06}"),
            title,
            body,
            source,
            source_type: ty,
            published: date_in(&mut rng, 2015, 2019),
            subreddit: (i % 3 == 0).then(|| "r/news".to_string()),
        });
    }
    articles
}

/// Answer nouns for choice items; distractors never use these.
const ANSWER_POOL: [(&str, &str); 10] = [
    ("directions", "a folded map"),
    ("soup", "a metal spoon"),
    ("rain", "a grey cloud"),
    ("music", "a quiet song"),
    ("roof", "a tall ladder"),
    ("light", "a bright lamp"),
    ("time", "a round clock"),
    ("letters", "a sealed envelope"),
    ("bread", "a warm oven"),
    ("fish", "a long rod"),
];

/// Distractor phrases; disjoint vocabulary from every answer phrase.
const DISTRACTOR_POOL: &[&str] = &[
    "some dry gravel",
    "an old fence",
    "the green bucket",
    "a broken chair",
    "two rubber boots",
    "the narrow door",
    "a velvet curtain",
    "one wooden crate",
    "the iron kettle",
    "a paper kite",
];

/// Five-choice items whose correct answer comes from a vocabulary the
/// distractors never touch, and echoes a cue word from the question.
pub fn csqa_items(n: usize, seed: u64) -> Vec<CSQAItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let (cue, answer) = ANSWER_POOL[i % ANSWER_POOL.len()];
            let mut choices: Vec<String> = rand::seq::index::sample(&mut rng, DISTRACTOR_POOL.len(), 4)
                .iter()
                .map(|j| DISTRACTOR_POOL[j].to_string())
                .collect();
            let answer_index = rng.random_range(0..=choices.len());
            choices.insert(answer_index, answer.to_string());
            CSQAItem {
                question: format!("what would you need when dealing with {cue} today"),
                choices,
                answer_index,
            }
        })
        .collect()
}

const NFS_OPENERS: &[&str] = &["i believe", "frankly", "in my view", "honestly", "we feel"];
const NFS_TAILS: &[&str] = &[
    "this town deserves better weather",
    "the best songs are the old ones",
    "nobody enjoys long meetings",
    "that color suits the building",
];
const UFS_TAILS: &[&str] = &[
    "the office opens on weekdays",
    "the river passes the mill",
    "the hall has wooden floors",
    "the market closes at dusk",
];
const CFS_TAILS: &[&str] = &[
    "the budget rose <number> percent last year",
    "the city counted <number> permits in march",
    "unemployment fell to <number> percent in june",
    "the council spent <cur><number> on the bridge",
];

/// Claim sentences in three separable styles: opinions (NFS), mundane
/// facts (UFS), and numeric check-worthy claims (CFS). Every fifth
/// sentence is tagged test, the rest train.
pub fn claim_sentences(n: usize, seed: u64) -> Vec<ClaimStatement> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = ClaimLabel::ALL[i % ClaimLabel::ALL.len()];
            let text = match label {
                ClaimLabel::NFS => format!(
                    "{} {}",
                    NFS_OPENERS.choose(&mut rng).unwrap(),
                    NFS_TAILS.choose(&mut rng).unwrap()
                ),
                ClaimLabel::UFS => format!(
                    "records show {}",
                    UFS_TAILS.choose(&mut rng).unwrap()
                ),
                ClaimLabel::CFS => CFS_TAILS.choose(&mut rng).unwrap().to_string(),
            };
            ClaimStatement {
                text,
                label,
                split: if i % 5 == 4 { SplitTag::Test } else { SplitTag::Train },
                annotations: None,
            }
        })
        .collect()
}

/// A single-category fixture with exact published statistics: 1976
/// satire articles over 42 sources whose cleaned bodies average 287.65
/// tokens and titles 10.48 tokens (to two decimals).
///
/// Totals are the closest integers to the published means times the
/// article count: 1284 bodies of 288 tokens with 692 of 287
/// (= 568,396 tokens, mean 287.6497…), and 948 titles of 11 tokens
/// with 1028 of 10 (= 20,708 tokens, mean 10.4797…).
pub fn satire_stats_fixture() -> Vec<NewsArticle> {
    const ARTICLES: usize = 1976;
    const SOURCES: usize = 42;
    (0..ARTICLES)
        .map(|i| {
            let body_len = if i < 1284 { 288 } else { 287 };
            let title_len = if i < 948 { 11 } else { 10 };
            let word = |k: usize| FILLER[k % FILLER.len()];
            let body: Vec<&str> = (0..body_len).map(word).collect();
            let title: Vec<&str> = (0..title_len).map(word).collect();
            NewsArticle {
                id: format!("sat{i:05}"),
                title: title.join(" "),
                body: body.join(" "),
                source: format!("satire-{}.example.com", i % SOURCES),
                source_type: SourceType::Satire,
                published: NaiveDate::from_ymd_opt(2018, 1 + (i % 12) as u32, 1).unwrap(),
                subreddit: None,
            }
        })
        .collect()
}
