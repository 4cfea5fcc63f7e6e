//! Inputs shared by the pipeline benchmarks.

use erpchat_core::llm::ChatMessage;

/// Queries of increasing size that pass the read-only validator.
pub const SELECTS: [(&str, &str); 3] = [
    ("point", "SELECT PartNumber FROM T_A WHERE idA = 4"),
    (
        "join",
        "SELECT a.PartNumber, SUM(e.QuantityShipped) AS qty FROM T_E e JOIN T_B b ON b.idB = e.idB \
         JOIN T_A a ON a.idA = b.idA WHERE e.ShipDate LIKE '2023-05%' GROUP BY a.PartNumber ORDER BY qty DESC",
    ),
    (
        "cte",
        "WITH failed AS (SELECT d.UnitNumber, d.PathID FROM T_D d WHERE d.TestResult = 'FAIL'), \
         paths AS (SELECT f.PathID, COUNT(*) AS n FROM T_F f JOIN failed x ON x.PathID = f.PathID GROUP BY f.PathID) \
         SELECT p.PathID, p.n, (SELECT COUNT(*) FROM T_F) AS total FROM paths p WHERE p.n > 1 \
         UNION ALL SELECT NULL, 0, 0 ORDER BY 2 DESC LIMIT 20",
    ),
];

/// A reasoner reply with `blocks` fenced blocks of mixed tags.
pub fn reasoner_reply(blocks: usize) -> String {
    let mut doc = String::new();
    for i in 0..blocks {
        doc.push_str("The shipments table joins to lots, and lots to parts.\n\n");
        let tag = if i % 3 == 0 { "json" } else { "sql" };
        doc.push_str(&format!("```{tag}\nSELECT col{i} FROM T_A WHERE idA > {i}\n```\n\n"));
    }
    doc
}

/// A transcript resembling a reasoner call after a few repair attempts.
pub fn transcript(turns: usize) -> Vec<ChatMessage> {
    let mut messages = vec![ChatMessage::system("x".repeat(12_000))];
    for i in 0..turns {
        messages.push(ChatMessage::assistant(reasoner_reply(2)));
        messages.push(ChatMessage::user(format!("Execution failed: no such column: col{i}")));
    }
    messages
}
