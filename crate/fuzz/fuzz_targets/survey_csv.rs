#![no_main]

use libfuzzer_sys::fuzz_target;
use servqual::dataset::{parse_survey, VariableCatalog};

fuzz_target!(|data: &[u8]| {
    let catalog = VariableCatalog::reference();
    if let Ok(loaded) = parse_survey(data, &catalog) {
        // Accepted rows must survive a write/read cycle unchanged.
        let text = loaded.dataset.to_csv_string();
        let again = parse_survey(text.as_bytes(), &catalog).expect("own output parses");
        assert_eq!(again.dataset, loaded.dataset);
        assert!(again.rejected.is_empty());
    }
});
