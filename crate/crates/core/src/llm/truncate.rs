use crate::corpus::Review;

/// Counts tokens for context budgeting.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> u64;
}

/// Whitespace word count times 1.3, rounded up. Deliberately generous so a
/// budget computed with it rarely overflows a real tokenizer.
#[derive(Debug, Clone, Copy, Default)]
pub struct WordCountEstimator;

impl TokenCounter for WordCountEstimator {
    fn count(&self, text: &str) -> u64 {
        let words = text.split_whitespace().count() as u64;
        (words * 13).div_ceil(10)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Truncation {
    pub reviews: Vec<Review>,
    /// The newest review alone exceeded the budget and was kept anyway.
    pub oversize: bool,
    pub dropped: usize,
}

/// Keep the most recent reviews that fit in `budget_tokens`.
///
/// The kept set is the longest suffix of the date-sorted reviews within
/// budget; the output keeps the input's relative order. Equal dates are
/// ordered by input position.
pub fn truncate_reviews(reviews: &[Review], budget_tokens: u64, counter: &dyn TokenCounter) -> Truncation {
    let mut by_date: Vec<usize> = (0..reviews.len()).collect();
    by_date.sort_by_key(|&i| reviews[i].date);

    let mut keep = vec![false; reviews.len()];
    let mut used = 0u64;
    let mut oversize = false;
    for (n, &i) in by_date.iter().rev().enumerate() {
        let cost = counter.count(&reviews[i].text);
        if used + cost > budget_tokens {
            if n == 0 {
                keep[i] = true;
                oversize = true;
            }
            break;
        }
        used += cost;
        keep[i] = true;
    }

    let kept: Vec<Review> = reviews
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(r, _)| r.clone())
        .collect();
    Truncation {
        dropped: reviews.len() - kept.len(),
        reviews: kept,
        oversize,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    struct Fixed(u64);
    impl TokenCounter for Fixed {
        fn count(&self, _: &str) -> u64 {
            self.0
        }
    }

    fn review(year: i32, text: &str) -> Review {
        Review {
            date: NaiveDate::from_ymd_opt(year, 6, 1).unwrap(),
            text: text.into(),
        }
    }

    #[test]
    fn keeps_most_recent_within_budget() {
        let r = vec![review(2019, "a"), review(2020, "b"), review(2021, "c")];
        let t = truncate_reviews(&r, 220, &Fixed(100));
        assert_eq!(t.reviews, &r[1..]);
        assert!(!t.oversize);
        assert_eq!(t.dropped, 1);
    }

    #[test]
    fn identity_when_budget_suffices() {
        let r = vec![review(2021, "c"), review(2019, "a")];
        let t = truncate_reviews(&r, 300, &Fixed(100));
        assert_eq!(t.reviews, r);
    }

    #[test]
    fn oversize_newest_kept_alone() {
        let r = vec![review(2019, "a"), review(2021, "c")];
        let t = truncate_reviews(&r, 50, &Fixed(100));
        assert_eq!(t.reviews, vec![review(2021, "c")]);
        assert!(t.oversize);
    }

    #[test]
    fn output_preserves_input_order() {
        let r = vec![review(2021, "new"), review(2019, "old"), review(2020, "mid")];
        let t = truncate_reviews(&r, 200, &Fixed(100));
        assert_eq!(t.reviews, vec![review(2021, "new"), review(2020, "mid")]);
    }

    #[test]
    fn word_estimate_rounds_up() {
        assert_eq!(WordCountEstimator.count(""), 0);
        assert_eq!(WordCountEstimator.count("one"), 2);
        assert_eq!(WordCountEstimator.count("a b c d e f g h i j"), 13);
    }

    proptest! {
        #[test]
        fn kept_set_is_a_recent_suffix(
            years in proptest::collection::vec(2000i32..2024, 1..20),
            lens in proptest::collection::vec(1usize..30, 20),
            budget in 1u64..200,
        ) {
            let reviews: Vec<Review> = years.iter().zip(&lens)
                .map(|(&y, &n)| review(y, &"w ".repeat(n)))
                .collect();
            let t = truncate_reviews(&reviews, budget, &WordCountEstimator);
            let total: u64 = t.reviews.iter().map(|r| WordCountEstimator.count(&r.text)).sum();
            if t.oversize {
                prop_assert_eq!(t.reviews.len(), 1);
            } else {
                prop_assert!(total <= budget);
            }
            // every kept review is at least as recent as every dropped one
            let min_kept = t.reviews.iter().map(|r| r.date).min();
            let dropped_max = reviews.iter().filter(|r| !t.reviews.contains(r)).map(|r| r.date).max();
            if let (Some(k), Some(d)) = (min_kept, dropped_max) {
                prop_assert!(k >= d);
            }
        }
    }
}
