use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;

use super::*;

struct FixedChooser {
    answer: Option<usize>,
    calls: AtomicUsize,
}

impl FixedChooser {
    fn new(answer: Option<usize>) -> Self {
        FixedChooser { answer, calls: AtomicUsize::new(0) }
    }
}

#[async_trait]
impl BlockChooser for FixedChooser {
    async fn choose(&self, _: &ExtractionTarget, _: &[&FencedBlock], _: &str) -> Result<Option<usize>, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.answer)
    }
}

#[test]
fn mid_line_fence_is_recognized() {
    let blocks = parse_fences("text ```sql\nSELECT 1\n``` more");
    assert_eq!(blocks.len(), 1);
    assert_eq!(blocks[0].tag.as_deref(), Some("sql"));
    assert_eq!(blocks[0].content, "SELECT 1");
    assert!(blocks[0].terminated);
}

#[test]
fn closing_fence_may_trail_content() {
    let blocks = parse_fences("```sql\nSELECT 2```\nDone.");
    assert_eq!(blocks[0].content, "SELECT 2");
}

#[test]
fn one_line_block_has_no_tag() {
    let blocks = parse_fences("Answer: ```SELECT 3``` as shown");
    assert_eq!(blocks.len(), 1);
    assert_eq!(blocks[0].tag, None);
    assert_eq!(blocks[0].content, "SELECT 3");
}

#[test]
fn longer_fence_contains_shorter() {
    let doc = "````markdown\n```sql\nSELECT 1\n```\n````\n";
    let blocks = parse_fences(doc);
    assert_eq!(blocks.len(), 1);
    assert_eq!(blocks[0].tag.as_deref(), Some("markdown"));
    assert_eq!(blocks[0].content, "```sql\nSELECT 1\n```");
}

#[test]
fn unterminated_block_runs_to_end() {
    let blocks = parse_fences("intro\n```sql\nSELECT a\nFROM T_A\n");
    assert_eq!(blocks.len(), 1);
    assert!(!blocks[0].terminated);
    assert_eq!(blocks[0].content, "SELECT a\nFROM T_A");
}

#[test]
fn tilde_fences_and_ordinals() {
    let blocks = parse_fences("~~~json\n{}\n~~~\n```\nplain\n```\n");
    assert_eq!(blocks.iter().map(|b| b.ordinal).collect::<Vec<_>>(), [0, 1]);
    assert_eq!(blocks[1].tag, None);
}

#[test]
fn crlf_line_endings() {
    let blocks = parse_fences("```sql\r\nSELECT 1\r\n```\r\n");
    assert_eq!(blocks[0].tag.as_deref(), Some("sql"));
    assert_eq!(blocks[0].content, "SELECT 1");
}

#[tokio::test]
async fn unique_match_needs_no_extractor() {
    let chooser = FixedChooser::new(Some(0));
    let doc = "```json\n{}\n```\n```sql\nSELECT 1\n```";
    let sel = select_block(doc, &ExtractionTarget::sql(), Some(&chooser)).await.unwrap();
    assert_eq!(sel.method, SelectionMethod::Unique);
    assert_eq!(sel.block.content, "SELECT 1");
    assert_eq!(chooser.calls.load(Ordering::SeqCst), 0);
}

#[tokio::test]
async fn no_tagged_match_takes_last_block() {
    let chooser = FixedChooser::new(Some(0));
    let doc = "```\nSELECT 1\n```\ntext\n```\nSELECT 2\n```";
    let sel = select_block(doc, &ExtractionTarget::sql(), Some(&chooser)).await.unwrap();
    assert_eq!(sel.method, SelectionMethod::LastBlock);
    assert_eq!(sel.block.content, "SELECT 2");
    assert_eq!(chooser.calls.load(Ordering::SeqCst), 0);
}

#[tokio::test]
async fn several_matches_ask_extractor_once() {
    let chooser = FixedChooser::new(Some(0));
    let doc = "Final:\n```sql\nSELECT good\n```\nEarlier draft:\n```sql\nSELECT draft\n```";
    let sel = select_block(doc, &ExtractionTarget::sql(), Some(&chooser)).await.unwrap();
    assert_eq!(sel.method, SelectionMethod::Extractor);
    assert_eq!(sel.block.content, "SELECT good");
    assert_eq!(chooser.calls.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn bad_extractor_answer_falls_back_to_last_candidate() {
    for answer in [None, Some(7)] {
        let chooser = FixedChooser::new(answer);
        let doc = "```sql\nSELECT a\n```\n```json\n{}\n```\n```sql\nSELECT b\n```";
        let sel = select_block(doc, &ExtractionTarget::sql(), Some(&chooser)).await.unwrap();
        assert_eq!(sel.method, SelectionMethod::Fallback);
        assert_eq!(sel.block.content, "SELECT b");
    }
    // ordinal 1 names the json block, which is not a candidate
    let chooser = FixedChooser::new(Some(1));
    let doc = "```sql\nSELECT a\n```\n```json\n{}\n```\n```sql\nSELECT b\n```";
    let sel = select_block(doc, &ExtractionTarget::sql(), Some(&chooser)).await.unwrap();
    assert_eq!(sel.method, SelectionMethod::Fallback);
}

#[tokio::test]
async fn no_blocks_is_an_error_for_sql() {
    let err = select_block("SELECT 1", &ExtractionTarget::sql(), None).await.unwrap_err();
    assert_eq!(err, ExtractionError::NoBlocks);
}

#[tokio::test]
async fn bare_json_verdict_is_accepted() {
    let (_, parsed) = extract(r#"{"decision": "approved", "issues": []}"#, &ExtractionTarget::critique(), None)
        .await
        .unwrap();
    assert_eq!(parsed.into_record().unwrap()["decision"], "approved");
}

#[test]
fn shape_violations_name_the_field() {
    let target = ExtractionTarget::critique();
    let err = parse_into(r#"{"decision": "maybe", "issues": []}"#, &target.shape).unwrap_err();
    assert!(matches!(err, ExtractionError::ShapeViolation { ref field, .. } if field == "decision"), "{err:?}");
    let err = parse_into(r#"{"decision": "revise", "issues": [{"category": "semantic"}]}"#, &target.shape).unwrap_err();
    assert!(matches!(err, ExtractionError::ShapeViolation { ref field, .. } if field == "issues[0].detail"), "{err:?}");
    assert!(matches!(parse_into("not json", &target.shape), Err(ExtractionError::InvalidJson(_))));
    let ok = parse_into("  SELECT 1 \n", &Shape::RawText).unwrap();
    assert_eq!(ok.as_text(), Some("SELECT 1"));
}

#[test]
fn ordinal_replies() {
    assert_eq!(parse_ordinal(r#"{"ordinal": 2}"#), Some(2));
    assert_eq!(parse_ordinal("Sure! {\"ordinal\": 0} is it"), Some(0));
    assert_eq!(parse_ordinal("the second one"), None);
    assert_eq!(parse_ordinal("ordinal 1"), Some(1));
    assert_eq!(parse_ordinal(r#"{"ordinal": -1}"#), None);
}

#[test]
fn candidate_listing_is_truncated() {
    let block = FencedBlock { ordinal: 3, tag: Some("sql".into()), content: "x".repeat(500), terminated: true };
    let listing = render_candidates(&[&block]);
    assert_eq!(listing, format!("3: {}", "x".repeat(CANDIDATE_PREVIEW_CHARS)));
}

fn content_strategy() -> impl Strategy<Value = String> {
    proptest::collection::vec("[A-Za-z0-9 ,.;()*=<>'_-]{0,30}", 0..4).prop_map(|lines| lines.join("\n"))
}

proptest! {
    #[test]
    fn rendered_blocks_round_trip(
        blocks in proptest::collection::vec((proptest::option::of("[a-z]{1,8}"), content_strategy()), 0..6),
        prose in proptest::collection::vec("[A-Za-z ,.]{0,40}", 7),
    ) {
        let mut doc = String::new();
        for (i, (tag, content)) in blocks.iter().enumerate() {
            doc.push_str(&prose[i]);
            doc.push('\n');
            doc.push_str("```");
            doc.push_str(tag.as_deref().unwrap_or(""));
            doc.push('\n');
            doc.push_str(content);
            doc.push_str("\n```\n");
        }
        doc.push_str(&prose[6]);
        let parsed = parse_fences(&doc);
        prop_assert_eq!(parsed.len(), blocks.len());
        for (i, (got, (tag, content))) in parsed.iter().zip(&blocks).enumerate() {
            prop_assert_eq!(got.ordinal, i);
            prop_assert_eq!(&got.tag, tag);
            prop_assert_eq!(&got.content, content);
            prop_assert!(got.terminated);
        }
    }

    #[test]
    fn parsing_is_deterministic(doc in "[a-z`~\n ]{0,80}") {
        prop_assert_eq!(parse_fences(&doc), parse_fences(&doc));
    }
}
