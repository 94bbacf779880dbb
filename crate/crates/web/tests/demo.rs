use shelfscan_web::{lookup_word, pool_points, segment_regions};

#[test]
fn segments_a_painted_block() {
    let (w, h) = (80, 60);
    let mut scores = vec![0.0; w * h];
    for y in 20..32 {
        for x in 30..42 {
            scores[y * w + x] = 60.0;
        }
    }
    assert_eq!(segment_regions(w, h, &scores).unwrap(), vec![24, 14, 24, 24]);
    assert!(segment_regions(w, h, &scores[1..]).is_err());
}

#[test]
fn word_lookup_matches_the_service_shape() {
    let index = r#"{"coffee": {"arabica": 5, "mocha": 8}, "tea": {"mocha": 2}}"#;
    assert_eq!(lookup_word(index, "arabica").unwrap(), r#"{"auto":"coffee"}"#);
    let ranked: serde_json::Value = serde_json::from_str(&lookup_word(index, "MOCHA").unwrap()).unwrap();
    assert_eq!(ranked["ranked"][0]["name"], "coffee");
    assert_eq!(ranked["ranked"][1]["count"], 2);
    assert_eq!(lookup_word(index, "latte").unwrap(), r#"{"unknown":"latte"}"#);
    assert!(lookup_word("[1, 2]", "x").is_err());
}

#[test]
fn pools_by_quadrant() {
    let dets = r#"[{"class": 1, "score": 0.5, "x": 10, "y": 10},
                   {"class": 1, "score": 2.0, "x": 90, "y": 70},
                   {"class": 0, "score": -0.2, "x": 60, "y": 5}]"#;
    let v = pool_points(2, 100, 80, -1.5, dets).unwrap();
    assert_eq!(v.len(), 10);
    // whole, then TL, TR, BL, BR; two classes each.
    assert_eq!(v, vec![-0.2, 2.0, -1.5, 0.5, -0.2, -1.5, -1.5, -1.5, -1.5, 2.0]);
    assert!(pool_points(2, 100, 80, -1.5, r#"[{"class": 2, "score": 0, "x": 0, "y": 0}]"#).is_err());
}
