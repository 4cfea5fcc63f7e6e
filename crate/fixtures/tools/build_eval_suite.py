#!/usr/bin/env python3
"""Writes fixtures/eval_suite.toml from the case list below.

Expected rows are computed here with Python's sqlite3 against the bundled
seed, so the Rust harness is checked against an independent engine.
"""

import json
import pathlib
import sqlite3

ROOT = pathlib.Path(__file__).resolve().parents[1]

CASES = [
    {
        "id": 1,
        "question": "How many active parts are in the part master?",
        "validator": "expected_rows",
        "sql": "SELECT COUNT(*) AS active_parts FROM T_A WHERE Status = 'ACTIVE'",
    },
    {
        "id": 2,
        "question": "What was the total quantity shipped in May 2023 for each part number?",
        "validator": "expected_rows",
        "sql": "SELECT a.PartNumber, SUM(e.QuantityShipped) AS units FROM T_E e "
        "JOIN T_B b ON b.idB = e.idB JOIN T_A a ON a.idA = b.idA "
        "WHERE e.ShipDate >= '2023-05-01' AND e.ShipDate < '2023-06-01' GROUP BY a.PartNumber",
    },
    {
        "id": 3,
        "question": "Who were the top 3 customers by invoiced amount in 2023?",
        "validator": "expected_rows",
        "sql": "SELECT Customer, ROUND(SUM(InvoiceAmount), 2) AS invoiced FROM T_E "
        "WHERE ShipDate LIKE '2023-%' GROUP BY Customer ORDER BY invoiced DESC LIMIT 3",
    },
    {
        "id": 4,
        "question": "How many production orders finished after their due date, per program?",
        "validator": "expected_rows",
        "sql": "SELECT Program, COUNT(*) AS late_orders FROM T_B WHERE FinishDate > DueDate GROUP BY Program",
    },
    {
        "id": 5,
        "question": "What is the average duration of process steps for each operation, longest first?",
        "validator": "expected_rows",
        "sql": "SELECT Operation, AVG(DurationMin) AS avg_minutes FROM T_F GROUP BY Operation ORDER BY avg_minutes DESC",
    },
    {
        "id": 6,
        "question": "How many failed inspections are recorded for each defect code?",
        "validator": "expected_rows",
        "sql": "SELECT DefectCode, COUNT(*) AS failures FROM T_G WHERE Result = 'FAIL' "
        "AND DefectCode IS NOT NULL GROUP BY DefectCode",
    },
    {
        "id": 7,
        "question": "List the serial numbers of units that failed their final test, with the part number of each.",
        "validator": "expected_rows",
        "sql": "SELECT d.SerialNumber, a.PartNumber FROM T_D d JOIN T_A a ON a.CurrentCode = d.UnitNumber "
        "WHERE d.TestResult = 'FAIL'",
    },
    {
        "id": 8,
        "question": "What is the total material and labour cost of closed production orders in each part family?",
        "validator": "expected_rows",
        "sql": "SELECT a.Family, ROUND(SUM(b.MaterialCost + b.LabourCost), 2) AS total_cost FROM T_B b "
        "JOIN T_A a ON a.idA = b.idA WHERE b.OrderStatus = 'CLOSED' GROUP BY a.Family",
    },
    {
        "id": 9,
        "question": "How many process steps were executed on each unit that failed its final test?",
        "validator": "expected_sql_predicate",
        "required": ["T_F", "T_D", "PathID", "TestResult", "GROUP BY"],
        "forbidden": ["UnitNumber ="],
        "sql": "SELECT d.SerialNumber, COUNT(f.idF) AS steps FROM T_D d JOIN T_F f ON f.PathID = d.ID "
        "WHERE d.TestResult = 'FAIL' GROUP BY d.SerialNumber",
    },
    {
        "id": 10,
        "question": "Which technical standard covers the largest quantity of delivered shipments?",
        "validator": "expected_rows",
        "sql": "SELECT c.Standard, SUM(e.QuantityShipped) AS delivered FROM T_E e JOIN T_C c ON c.idC = e.idC "
        "WHERE e.DeliveryStatus = 'DELIVERED' GROUP BY c.Standard ORDER BY delivered DESC LIMIT 1",
    },
    {
        "id": 11,
        "question": "Which program has the best quality record?",
        "validator": "manual",
        "sql": "SELECT Program, ROUND(100.0 * SUM(CASE WHEN Result = 'PASS' THEN 1 ELSE 0 END) / COUNT(*), 2) "
        "AS pass_rate FROM T_G GROUP BY Program ORDER BY pass_rate DESC",
        "reviewed": [
            ("fail", "SELECT Program, COUNT(*) AS inspections FROM T_G GROUP BY Program ORDER BY inspections DESC"),
        ],
    },
]


def toml_str(text):
    return json.dumps(text, ensure_ascii=False)


def toml_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if value is None:
        raise ValueError("canonical results must not contain NULL")
    return toml_str(value)


def main():
    conn = sqlite3.connect(":memory:")
    conn.executescript((ROOT / "erp_seed.sql").read_text())
    out = [
        "# Evaluation questions over the bundled ERP fixture.",
        "# Generated by fixtures/tools/build_eval_suite.py; edit the script, not this file.",
        "",
    ]
    for case in CASES:
        out += ["[[case]]", f"id = {case['id']}", f"question = {toml_str(case['question'])}"]
        out.append(f"reference_sql = {toml_str(case['sql'])}")
        out += ["", "[case.validator]", f"kind = {toml_str(case['validator'])}"]
        if case["validator"] == "expected_rows":
            cur = conn.execute(case["sql"])
            columns = [d[0] for d in cur.description]
            rows = cur.fetchall()
            ordered = "ORDER BY" in case["sql"].upper()
            out.append("columns = [" + ", ".join(toml_str(c) for c in columns) + "]")
            out.append(f"ordered = {toml_value(ordered)}")
            out.append("rows = [")
            out += ["    [" + ", ".join(toml_value(v) for v in row) + "]," for row in rows]
            out.append("]")
        elif case["validator"] == "expected_sql_predicate":
            out.append("required = [" + ", ".join(toml_str(f) for f in case["required"]) + "]")
            out.append("forbidden = [" + ", ".join(toml_str(f) for f in case["forbidden"]) + "]")
        else:
            reviewed = [("pass", case["sql"])] + case["reviewed"]
            for verdict, sql in reviewed:
                out += ["", "[[case.validator.reviewed]]", f"verdict = {toml_str(verdict)}", f"sql = {toml_str(sql)}"]
        out.append("")
    (ROOT / "eval_suite.toml").write_text("\n".join(out))


if __name__ == "__main__":
    main()
