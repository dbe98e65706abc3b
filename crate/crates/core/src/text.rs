//! Character-offset helpers shared by every module that handles spans.

/// Number of Unicode scalar values in `s`.
pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Byte offset of the `char_idx`-th character, or `s.len()` when `char_idx` equals the
/// character length. `None` when out of range.
pub fn byte_offset(s: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (b, _) in s.char_indices() {
        if count == char_idx {
            return Some(b);
        }
        count += 1;
    }
    (count == char_idx).then_some(s.len())
}

/// Slice `s` by half-open character offsets.
pub fn char_slice(s: &str, begin: usize, end: usize) -> Option<&str> {
    if begin > end {
        return None;
    }
    let b = byte_offset(s, begin)?;
    let e = byte_offset(s, end)?;
    Some(&s[b..e])
}

/// Maps byte offsets of `s` to character offsets. The returned table has `s.len() + 1`
/// entries; entries for bytes inside a multi-byte character hold the index of that character.
pub fn byte_to_char_table(s: &str) -> Vec<usize> {
    let mut table = vec![0; s.len() + 1];
    let mut ci = 0;
    for (b, c) in s.char_indices() {
        for slot in &mut table[b..b + c.len_utf8()] {
            *slot = ci;
        }
        ci += 1;
    }
    table[s.len()] = ci;
    table
}

/// Comparison form of a value: lowercased with whitespace runs collapsed to one space.
pub fn normalize_value(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_by_chars() {
        let s = "héllo wörld";
        assert_eq!(char_slice(s, 1, 5), Some("éllo"));
        assert_eq!(char_slice(s, 6, 11), Some("wörld"));
        assert_eq!(char_slice(s, 6, 12), None);
        assert_eq!(char_slice(s, 11, 11), Some(""));
    }

    #[test]
    fn byte_table_covers_multibyte() {
        let s = "aé b";
        let t = byte_to_char_table(s);
        assert_eq!(t, vec![0, 1, 1, 2, 3, 4]);
    }

    #[test]
    fn normalizes_values() {
        assert_eq!(normalize_value("  Beanie \t Baby "), "beanie baby");
    }
}
