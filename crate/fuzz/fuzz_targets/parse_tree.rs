#![no_main]

use libfuzzer_sys::fuzz_target;
use pqgram::{extract_grams, gram_count, parse_tree, GramShape};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(tree) = parse_tree(text) else { return };
    let canonical = tree.to_bracket();
    let again = parse_tree(&canonical).expect("canonical form must parse");
    assert_eq!(again, tree);
    assert_eq!(again.to_bracket(), canonical);
    let shape = GramShape::new(2, 3).unwrap();
    assert_eq!(extract_grams(&tree, shape).total(), gram_count(&tree, shape));
});
