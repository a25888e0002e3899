//! Gestalt pattern matching: similarity of two strings as twice the number
//! of matching characters over the total length, where matches are counted
//! by recursively taking the longest common contiguous block and descending
//! into the unmatched flanks on each side.
//!
//! Tie-break convention, shared with the independent oracle in the
//! acceptance suite: among equally long common blocks, the one starting
//! earliest in the first string wins, then earliest in the second.

/// Longest common contiguous block of `a[alo..ahi]` and `b[blo..bhi]`:
/// (start in a, start in b, length). Rolling-array scan; only strictly
/// longer blocks displace the incumbent, which realizes the tie-break.
fn longest_block(
    a: &[char],
    b: &[char],
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
) -> (usize, usize, usize) {
    let width = bhi - blo;
    let mut prev = vec![0usize; width + 1];
    let mut best = (alo, blo, 0usize);
    for (i, &ach) in a.iter().enumerate().take(ahi).skip(alo) {
        let mut cur = vec![0usize; width + 1];
        for j in blo..bhi {
            if ach == b[j] {
                let len = prev[j - blo] + 1;
                cur[j - blo + 1] = len;
                if len > best.2 {
                    best = (i + 1 - len, j + 1 - len, len);
                }
            }
        }
        prev = cur;
    }
    best
}

fn matching_chars(a: &[char], b: &[char]) -> usize {
    let mut total = 0;
    let mut stack = vec![(0usize, a.len(), 0usize, b.len())];
    while let Some((alo, ahi, blo, bhi)) = stack.pop() {
        if alo >= ahi || blo >= bhi {
            continue;
        }
        let (sa, sb, len) = longest_block(a, b, alo, ahi, blo, bhi);
        if len == 0 {
            continue;
        }
        total += len;
        stack.push((alo, sa, blo, sb));
        stack.push((sa + len, ahi, sb + len, bhi));
    }
    total
}

/// Similarity in [0, 1]. Two empty strings count as identical; an empty
/// string against a non-empty one scores 0.
pub fn ratcliff_obershelp(a: &str, b: &str) -> f64 {
    let ac: Vec<char> = a.chars().collect();
    let bc: Vec<char> = b.chars().collect();
    if ac.is_empty() && bc.is_empty() {
        return 1.0;
    }
    if ac.is_empty() || bc.is_empty() {
        return 0.0;
    }
    2.0 * matching_chars(&ac, &bc) as f64 / (ac.len() + bc.len()) as f64
}
