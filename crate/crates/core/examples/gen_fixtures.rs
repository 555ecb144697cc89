//! Regenerates the committed synthetic fixtures under `fixtures/`.
//!
//! ```sh
//! cargo run -p veritask --example gen_fixtures
//! ```
//!
//! The generators are seeded, so the output is byte-identical on every
//! run; rerun this after changing `veritask::synthetic` and commit the
//! diff.

use veritask::corpus::write_jsonl;
use veritask::synthetic::{claim_sentences, csqa_items, news_corpus};

fn main() -> veritask::Result<()> {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .join("fixtures");
    std::fs::create_dir_all(&root)?;

    let articles = news_corpus(1000, 10, 0);
    write_jsonl(&root.join("news.jsonl"), &articles)?;
    println!("wrote {} articles", articles.len());

    let items = csqa_items(300, 0);
    write_jsonl(&root.join("csqa.jsonl"), &items)?;
    println!("wrote {} choice questions", items.len());

    let claims = claim_sentences(600, 0);
    write_jsonl(&root.join("claims.jsonl"), &claims)?;
    println!("wrote {} claim sentences", claims.len());

    Ok(())
}
