//! Turtle path helpers.

use std::sync::Arc;

/// Marker segment that ends a truncated path.
pub const TRUNCATED: &str = "…";

/// Cap a dotted path at `max_depth` segments. Longer paths keep their first
/// `max_depth - 1` segments followed by the truncation marker.
pub fn cap_path(path: &str, max_depth: usize) -> Arc<str> {
    let segments: Vec<&str> = path.split('.').collect();
    if segments.len() <= max_depth.max(1) || segments.contains(&TRUNCATED) {
        let keep = segments.iter().position(|s| *s == TRUNCATED).map(|i| i + 1).unwrap_or(segments.len());
        return Arc::from(segments[..keep].join("."));
    }
    let keep = max_depth.max(2) - 1;
    let mut out = segments[..keep].join(".");
    out.push('.');
    out.push_str(TRUNCATED);
    Arc::from(out)
}

/// Path of the turtle returned by calling `name` on a turtle at `path`.
/// Truncated paths absorb further extensions.
pub fn extend(path: &str, name: &str, max_depth: usize) -> Arc<str> {
    if path.ends_with(TRUNCATED) || name.is_empty() {
        return Arc::from(path);
    }
    cap_path(&format!("{path}.{name}"), max_depth)
}

/// Last path segment, used as a display label.
pub fn short_label(path: &str) -> &str {
    path.rsplit('.').next().unwrap_or(path)
}

/// Whether `path` lies under the dotted prefix `root` (segment-wise).
pub fn has_root(path: &str, root: &str) -> bool {
    path == root || (path.starts_with(root) && path.as_bytes().get(root.len()) == Some(&b'.'))
}
