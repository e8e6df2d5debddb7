/// Canonical form used to decide whether two URLs point at the same page.
///
/// Lowercases, then strips the fragment, the `http://`/`https://` scheme, a
/// leading `www.` and trailing slashes. Idempotent.
pub fn normalize_url(url: &str) -> String {
    let mut s = url.to_lowercase();
    if let Some(i) = s.find('#') {
        s.truncate(i);
    }
    // repeat until stable so the result is a fixed point
    loop {
        let before = s.len();
        s = s.trim().to_string();
        for prefix in ["https://", "http://", "www."] {
            if let Some(rest) = s.strip_prefix(prefix) {
                s = rest.to_string();
            }
        }
        while s.ends_with('/') {
            s.pop();
        }
        if s.len() == before {
            return s;
        }
    }
}

/// Normalized comparison, or byte equality when `strict`.
pub fn urls_match(a: &str, b: &str, strict: bool) -> bool {
    if strict {
        a == b
    } else {
        normalize_url(a) == normalize_url(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(
            normalize_url("https://en.wikipedia.org/wiki/Liz_Truss"),
            "en.wikipedia.org/wiki/liz_truss"
        );
        assert_eq!(
            normalize_url("http://www.oecd.org/economic-outlook/may-2021/"),
            "oecd.org/economic-outlook/may-2021"
        );
        assert_eq!(
            normalize_url("oecd.org/economic-outlook/may-2021"),
            "oecd.org/economic-outlook/may-2021"
        );
        assert_eq!(normalize_url("https://a.com/x#section"), "a.com/x");
    }

    #[test]
    fn strict_matching_is_exact() {
        assert!(urls_match("https://A.com/", "a.com", false));
        assert!(!urls_match("https://A.com/", "a.com", true));
    }

    proptest! {
        #[test]
        fn idempotent(u in "(https?://)?(www\\.)?[a-zA-Z./#_-]{0,30}") {
            let once = normalize_url(&u);
            prop_assert_eq!(normalize_url(&once), once.clone());
        }
    }
}
