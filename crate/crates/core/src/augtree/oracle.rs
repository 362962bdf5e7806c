//! Exact combinatorial adjacency for the interval and the gaskets, used to
//! cross-check the geometric edge builder.

/// Dyadic cells `[k/2^n, (k+1)/2^n]` touch iff their indices differ by one.
pub fn interval_adjacent(x: &[u8], y: &[u8]) -> bool {
    if x.len() != y.len() || x.len() > 63 {
        return false;
    }
    let index = |w: &[u8]| w.iter().fold(0u64, |acc, &s| 2 * acc + s as u64);
    index(x).abs_diff(index(y)) == 1
}

/// Gasket cells `S_x(K)`, `S_y(K)` of equal length meet iff, after their
/// common prefix, `x = w·i·j…j` and `y = w·j·i…i`: the shared corner.
pub fn gasket_adjacent(x: &[u8], y: &[u8]) -> bool {
    if x.len() != y.len() || x == y {
        return false;
    }
    let k = x.iter().zip(y).take_while(|(a, b)| a == b).count();
    let (i, j) = (x[k], y[k]);
    x[k + 1..].iter().all(|&s| s == j) && y[k + 1..].iter().all(|&s| s == i)
}

/// Whether two same-level words name touching cells.
pub type Adjacency = fn(&[u8], &[u8]) -> bool;

/// Exact adjacency for a built-in system, if one is known.
pub fn adjacency_for(name: &str) -> Option<Adjacency> {
    match name {
        "interval" => Some(interval_adjacent),
        n if n.starts_with("gasket") => Some(gasket_adjacent),
        _ => None,
    }
}
