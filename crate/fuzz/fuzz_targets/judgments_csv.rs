#![no_main]

use libfuzzer_sys::fuzz_target;
use servqual::ahp::{self, Hierarchy};

fuzz_target!(|data: &[u8]| {
    let h = Hierarchy::reference();
    if let Ok(rows) = ahp::parse_judgments(data, &h) {
        for r in &rows {
            let _ = ahp::weights_eigen(&r.criteria);
        }
    }
});
