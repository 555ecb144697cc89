//! Small fixture constructors shared across unit tests.

use chrono::NaiveDate;

use crate::corpus::{NewsArticle, SourceType};

pub(crate) fn article(id: &str, source: &str, ty: SourceType, date: &str) -> NewsArticle {
    NewsArticle {
        id: id.into(),
        title: format!("title for {id}"),
        body: format!("body text for {id} with a few tokens"),
        source: source.into(),
        source_type: ty,
        published: NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap(),
        subreddit: None,
    }
}
