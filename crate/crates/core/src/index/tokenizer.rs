/// Split on every non-alphanumeric character and lowercase the pieces.
///
/// This is the single tokenizer shared by indexing, querying, reranking and
/// the proxy evaluator.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(
            tokenize("The Marine Life Park"),
            vec!["the", "marine", "life", "park"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("world's 2nd-largest"),
            vec!["world", "s", "2nd", "largest"]
        );
        assert_eq!(tokenize("Ünïcode ÉTÉ, ok"), vec!["ünïcode", "été", "ok"]);
        assert!(tokenize(" -- ,, ").is_empty());
    }
}
