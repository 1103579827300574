#![no_main]

use libfuzzer_sys::fuzz_target;
use maxstable::partitions::SetPartition;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data)
        && let Ok(p) = s.parse::<SetPartition>()
    {
        let s2 = p.to_string();
        let p2 = s2
            .parse::<SetPartition>()
            .expect("formatted partition must parse");
        assert_eq!(p, p2, "{s:?} -> {s2:?}");
    }
});
