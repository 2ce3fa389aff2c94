/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word edit count and reference length; the rate is their ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WordErrors {
    pub errors: usize,
    pub ref_words: usize,
}

impl WordErrors {
    /// With an empty reference the denominator is taken as 1.
    pub fn rate(&self) -> f64 {
        self.errors as f64 / self.ref_words.max(1) as f64
    }
}

impl std::ops::Add for WordErrors {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self {
            errors: self.errors + o.errors,
            ref_words: self.ref_words + o.ref_words,
        }
    }
}

/// Word errors of `hyp` against `reference`, both split on whitespace.
pub fn wer(hyp: &str, reference: &str) -> WordErrors {
    let h: Vec<&str> = hyp.split_whitespace().collect();
    let r: Vec<&str> = reference.split_whitespace().collect();
    if r.is_empty() {
        log::warn!("empty reference; counting {} insertions over a denominator of 1", h.len());
    }
    WordErrors {
        errors: edit_distance(&h, &r),
        ref_words: r.len(),
    }
}

/// Total errors over total reference words.
pub fn corpus_wer<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> f64 {
    pairs
        .into_iter()
        .map(|(h, r)| wer(h, r))
        .fold(WordErrors::default(), |a, b| a + b)
        .rate()
}
