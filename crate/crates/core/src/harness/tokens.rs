//! Token estimates for transcripts whose server reply carried no usage.

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // kana
        | 0x3400..=0x4DBF    // CJK extension A
        | 0x4E00..=0x9FFF    // CJK unified ideographs
        | 0xAC00..=0xD7AF    // hangul syllables
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2FA1F)
}

/// `ceil(chars / 4)`, or `ceil(chars / 1.5)` when the text contains any CJK character.
pub fn token_count(text: &str) -> u64 {
    let chars = text.chars().count() as u64;
    if text.chars().any(is_cjk) {
        // ceil(n / 1.5) == ceil(2n / 3), kept in integers.
        (2 * chars).div_ceil(3)
    } else {
        chars.div_ceil(4)
    }
}
