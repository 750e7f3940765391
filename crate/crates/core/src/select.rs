use std::cmp::Ordering;

/// Returns the first `k` items of `items` under `order`, sorted.
///
/// `order` must be a strict total order (break value ties on an id), which
/// makes partial selection agree exactly with sort-then-truncate.
pub fn top_k_by<T, F>(mut items: Vec<T>, k: usize, mut order: F) -> Vec<T>
where
    F: FnMut(&T, &T) -> Ordering,
{
    if k == 0 {
        return Vec::new();
    }
    if k < items.len() {
        items.select_nth_unstable_by(k - 1, &mut order);
        items.truncate(k);
    }
    items.sort_unstable_by(order);
    items
}

/// Descending by score, ascending by id on equal scores.
#[inline]
pub fn score_desc_id_asc<S: PartialOrd>(a: (usize, S), b: (usize, S)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then(a.0.cmp(&b.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_full_sort(values in prop::collection::vec(0u8..8, 0..60), k in 0usize..70) {
            let items: Vec<(usize, u8)> = values.iter().copied().enumerate().collect();
            let got = top_k_by(items.clone(), k, |a, b| score_desc_id_asc(*a, *b));
            let mut want = items;
            want.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
            want.truncate(k);
            prop_assert_eq!(got, want);
        }
    }
}
