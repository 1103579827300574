#![no_main]

use libfuzzer_sys::fuzz_target;
use maxstable_io::partitions::{read_partitions, write_partitions};

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = read_partitions(data) {
        let mut out = Vec::new();
        write_partitions(&mut out, &map).expect("write to memory");
        assert_eq!(
            read_partitions(out.as_slice()).expect("written table must parse"),
            map
        );
    }
});
