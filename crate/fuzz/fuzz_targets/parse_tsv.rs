#![no_main]

use libfuzzer_sys::fuzz_target;
use pqgram::datasets::parse_tsv;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(corpus) = parse_tsv(text, "fuzz") else { return };
    let again = parse_tsv(&corpus.to_tsv(), "fuzz").expect("written corpus must parse");
    assert_eq!(again.items(), corpus.items());
    assert_eq!(again.label_names(), corpus.label_names());
});
