mod support;

use std::fs;

/// Committed fixtures are exactly what the generator produces.
#[test]
fn fixtures_match_generator() {
    let root = support::fixtures_dir();
    let files = support::generate();
    let bless = std::env::var_os("CTXBANK_BLESS").is_some();
    let mut stale = Vec::new();
    for (rel, content) in &files {
        let path = root.join(rel);
        if bless {
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(&path, content).unwrap();
        } else if fs::read_to_string(&path).ok().as_deref() != Some(content.as_str()) {
            stale.push(rel.clone());
        }
    }
    assert!(
        stale.is_empty(),
        "fixtures out of date: {stale:?}; rerun with CTXBANK_BLESS=1 after checking the change"
    );
}
