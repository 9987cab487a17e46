//! The bundled stemmer against reference stems for a legal-text vocabulary.

use lexcase::textprep::Stemmer;

#[test]
fn matches_reference_stems() {
    let stemmer = Stemmer::default();
    let table = include_str!("data/porter_vocab.tsv");
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for line in table.lines().filter(|l| !l.starts_with('#') && !l.is_empty()) {
        let (word, stem) = line.split_once('\t').expect("word<TAB>stem");
        let got = stemmer.stem(word);
        if got != stem {
            mismatches.push(format!("{word}: got {got}, expected {stem}"));
        }
        checked += 1;
    }
    assert!(checked > 800, "only {checked} vocabulary rows");
    assert!(mismatches.is_empty(), "{} mismatches:\n{}", mismatches.len(), mismatches.join("\n"));
}
