//! Lexical and embedding retrieval for legal case collections.

pub mod bm25;
pub mod corpus;
pub mod entail;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod fusion;
pub mod persist;
pub mod pipeline;
pub mod pvdm;
pub mod textprep;
pub mod tfidf;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $file:literal) => {
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            pub struct $name;
        };
    }
    chapter!(Introduction, "introduction.md");
    chapter!(Corpus, "corpus.md");
    chapter!(Preprocessing, "preprocessing.md");
    chapter!(Bm25, "bm25.md");
    chapter!(Tfidf, "tfidf.md");
    chapter!(ParagraphVectors, "paragraph-vectors.md");
    chapter!(Fusion, "fusion.md");
    chapter!(Evaluation, "evaluation.md");
    chapter!(Entailment, "entailment.md");
    chapter!(Cli, "cli.md");
}
