#![no_main]

use libfuzzer_sys::fuzz_target;
use maxstable_io::config::{KeyValues, Settings};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(kv) = s.parse::<KeyValues>() else {
        return;
    };
    let kv2 = kv
        .to_string()
        .parse::<KeyValues>()
        .expect("formatted pairs must parse");
    assert_eq!(kv, kv2);
    if let Ok(settings) = Settings::from_key_values(&kv) {
        let again = settings
            .to_string()
            .parse::<Settings>()
            .expect("resolved settings must parse");
        assert_eq!(settings, again);
    }
});
