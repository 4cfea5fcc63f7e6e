#!/usr/bin/env python3
"""Regenerates fixtures/erp_seed.sql, the synthetic ERP database seed.

Run from the repository root:  python3 fixtures/tools/generate_fixture.py
Output is deterministic for a given RANDOM_SEED.
"""
import random
from datetime import date, timedelta

RANDOM_SEED = 2025

# (name, type, description or None, generator key)
# Generator keys: see make_value().

def filler(prefix, count, kind="TEXT"):
    return [(f"{prefix}{i:02d}", kind, None, "user_" + kind.lower()) for i in range(1, count + 1)]


T_A = [
    ("idA", "INTEGER PRIMARY KEY", "Internal identifier of the part master record.", "pk"),
    ("CurrentCode", "TEXT NOT NULL", "Current unit code of the part; matches UnitNumber in unit tables.", "unit_code_a"),
    ("PartNumber", "TEXT NOT NULL", "Commercial part number shown to customers.", "part_number"),
    ("Description", "TEXT", "Short description of the part.", "part_desc"),
    ("Family", "TEXT", "Product family the part belongs to.", "family"),
    ("Revision", "TEXT", "Engineering revision letter.", "revision"),
    ("UnitOfMeasure", "TEXT", "Unit of measure used for stock and orders.", "uom"),
    ("UnitCost", "REAL", "Standard cost per unit in euros.", "money"),
    ("ListPrice", "REAL", "List sale price per unit in euros.", "money_hi"),
    ("WeightKg", "REAL", "Net weight of one unit in kilograms.", "weight"),
    ("Status", "TEXT", "Lifecycle status: ACTIVE, OBSOLETE or PROTOTYPE.", "part_status"),
    ("CreatedAt", "TEXT", "Date the part was created (ISO 8601).", "date"),
    ("LeadTimeDays", "INTEGER", "Typical manufacturing lead time in days.", "small_int"),
    ("SafetyStock", "INTEGER", "Minimum stock level kept in the warehouse.", "small_int"),
    ("Warehouse", "TEXT", "Default warehouse code.", "warehouse"),
    ("ExportControlled", "INTEGER", "1 when the part is subject to export control.", "flag"),
    ("DrawingRef", "TEXT", "Reference of the engineering drawing.", "drawing"),
    ("Material", "TEXT", "Main raw material.", "material"),
    ("Supplier", "TEXT", "Preferred supplier code for purchased parts.", "supplier"),
    ("MakeOrBuy", "TEXT", "M when manufactured in-house, B when purchased.", "make_buy"),
    ("Plant", "TEXT", None, "plant"),
    ("ABCClass", "TEXT", None, "abc"),
    ("LastModified", "TEXT", None, "date"),
] + filler("UserFieldA", 5)

T_B = [
    ("idB", "INTEGER PRIMARY KEY", "Internal identifier of the production order.", "pk"),
    ("idA", "INTEGER NOT NULL", "Part being manufactured (T_A.idA).", "fk_a"),
    ("OrderNumber", "TEXT NOT NULL", "Production order number.", "order_number"),
    ("Quantity", "INTEGER", "Quantity ordered for production.", "qty"),
    ("QuantityDone", "INTEGER", "Quantity already finished.", "qty"),
    ("StartDate", "TEXT", "Planned start date (ISO 8601).", "date"),
    ("DueDate", "TEXT", "Planned completion date (ISO 8601).", "date"),
    ("FinishDate", "TEXT", "Actual completion date, empty while open.", "date_or_null"),
    ("OrderStatus", "TEXT", "Order status: PLANNED, RELEASED, IN_PROGRESS, CLOSED.", "order_status"),
    ("Priority", "INTEGER", "Scheduling priority, 1 is highest.", "priority"),
    ("Customer", "TEXT", "Customer the order is produced for.", "customer"),
    ("ContractRef", "TEXT", "Customer contract reference.", "contract"),
    ("Workcenter", "TEXT", "Main workcenter executing the order.", "workcenter"),
    ("PlannedHours", "REAL", "Planned labour hours.", "hours"),
    ("ActualHours", "REAL", "Labour hours booked so far.", "hours"),
    ("MaterialCost", "REAL", "Material cost booked to the order in euros.", "money_hi"),
    ("LabourCost", "REAL", "Labour cost booked to the order in euros.", "money_hi"),
    ("ScrapQuantity", "INTEGER", "Units scrapped during production.", "small_int"),
    ("BatchNumber", "TEXT", "Production batch identifier.", "batch"),
    ("Planner", "TEXT", "Planner responsible for the order.", "person"),
    ("Plant", "TEXT", "Plant where the order is produced.", "plant"),
    ("ParentOrder", "TEXT", "Parent order number for sub-assemblies.", "order_number_or_null"),
    ("RoutingVersion", "INTEGER", "Routing version used.", "small_int"),
    ("BomVersion", "INTEGER", "Bill of materials version used.", "small_int"),
    ("CreatedAt", "TEXT", "Date the order was created.", "date"),
    ("ReleasedAt", "TEXT", "Date the order was released to the floor.", "date"),
    ("Remarks", "TEXT", "Free text remarks from planning.", "remark"),
    ("ApprovedByEmail", "TEXT", "Email of the approver.", "email"),
    ("QualityHold", "INTEGER", "1 when the order is blocked by quality.", "flag"),
    ("Program", "TEXT", "Defense program the order is charged to.", "program"),
    ("CostCenter", "TEXT", None, "cost_center"),
    ("Currency", "TEXT", None, "currency"),
    ("Shift", "TEXT", None, "shift"),
    ("Warehouse", "TEXT", None, "warehouse"),
    ("LotSize", "INTEGER", None, "small_int"),
    ("SetupHours", "REAL", None, "hours"),
    ("QueueHours", "REAL", None, "hours"),
    ("MoveHours", "REAL", None, "hours"),
    ("LastModified", "TEXT", None, "date"),
] + filler("UserFieldB", 38)

T_C = [
    ("idC", "INTEGER PRIMARY KEY", "Internal identifier of the technical sheet.", "pk"),
    ("idA", "INTEGER UNIQUE", "Part described by this sheet (T_A.idA).", "fk_a_unique"),
    ("SheetCode", "TEXT", "Code of the technical sheet.", "sheet_code"),
    ("Standard", "TEXT", "Applicable military or industrial standard.", "standard"),
    ("Tolerance", "TEXT", "General tolerance class.", "tolerance"),
    ("SurfaceFinish", "TEXT", "Required surface finish.", "finish"),
    ("HeatTreatment", "TEXT", "Heat treatment specification.", "heat"),
    ("InspectionLevel", "TEXT", "Required inspection level.", "insp_level"),
    ("ApprovedAt", "TEXT", "Date the sheet was approved.", "date"),
    ("Classification", "TEXT", "Security classification of the document.", "classification"),
    ("Notes", "TEXT", None, "remark"),
    ("Author", "TEXT", None, "person"),
    ("LastModified", "TEXT", None, "date"),
] + filler("UserFieldC", 2)

T_D = [
    ("ID", "INTEGER PRIMARY KEY", "Internal identifier of the serialized unit.", "pk"),
    ("UnitNumber", "TEXT NOT NULL", "Unit code; equals T_A.CurrentCode of the part.", "unit_code_ref"),
    ("SerialNumber", "TEXT", "Serial number engraved on the unit.", "serial"),
    ("BuildDate", "TEXT", "Date the unit was assembled.", "date"),
    ("UnitStatus", "TEXT", "Unit status: IN_STOCK, SHIPPED, SCRAPPED, REWORK.", "unit_status"),
    ("Location", "TEXT", "Current storage location.", "location"),
    ("Owner", "TEXT", "Customer owning the unit once shipped.", "customer"),
    ("WarrantyEnd", "TEXT", "End date of warranty.", "date"),
    ("FirmwareVersion", "TEXT", "Installed firmware version.", "firmware"),
    ("TestResult", "TEXT", "Final acceptance test result PASS or FAIL.", "pass_fail"),
    ("Inspector", "TEXT", "Inspector who signed the acceptance test.", "person"),
    ("BatchNumber", "TEXT", "Production batch of the unit.", "batch"),
    ("ReworkCount", "INTEGER", "Number of rework cycles the unit went through.", "tiny_int"),
    ("HoursRun", "REAL", "Test bench running hours.", "hours"),
    ("Program", "TEXT", "Defense program the unit is assigned to.", "program"),
    ("Plant", "TEXT", None, "plant"),
    ("LastModified", "TEXT", None, "date"),
] + filler("UserFieldD", 20)

T_E = [
    ("idE", "INTEGER PRIMARY KEY", "Internal identifier of the shipment line.", "pk"),
    ("idB", "INTEGER UNIQUE", "Production order shipped by this line (T_B.idB).", "fk_b_unique"),
    ("idC", "INTEGER", "Technical sheet the shipment complies with (T_C.idC).", "fk_c"),
    ("ShipmentNumber", "TEXT", "Delivery note number.", "shipment_number"),
    ("ShipDate", "TEXT", "Date the goods left the plant (ISO 8601).", "ship_date"),
    ("QuantityShipped", "INTEGER", "Units shipped on this line.", "qty"),
    ("Customer", "TEXT", "Customer receiving the shipment.", "customer"),
    ("Destination", "TEXT", "Destination country code.", "country"),
    ("Carrier", "TEXT", "Transport carrier.", "carrier"),
    ("Incoterm", "TEXT", "Incoterm of the delivery.", "incoterm"),
    ("InvoiceNumber", "TEXT", "Invoice issued for the shipment.", "invoice"),
    ("InvoiceAmount", "REAL", "Invoiced amount in euros.", "money_hi"),
    ("Currency", "TEXT", "Invoice currency.", "currency"),
    ("DeliveryStatus", "TEXT", "Delivery status: IN_TRANSIT, DELIVERED, RETURNED.", "delivery_status"),
    ("DeliveredAt", "TEXT", "Date the customer received the goods.", "date_or_null"),
    ("ExportLicense", "TEXT", "Export license number when required.", "license"),
    ("PackagingType", "TEXT", "Packaging used.", "packaging"),
    ("GrossWeightKg", "REAL", "Gross weight of the shipment.", "weight"),
    ("Warehouse", "TEXT", None, "warehouse"),
    ("CreatedAt", "TEXT", None, "date"),
    ("LastModified", "TEXT", None, "date"),
] + filler("UserFieldE", 22)

T_F = [
    ("idF", "INTEGER PRIMARY KEY", "Internal identifier of the process step record.", "pk"),
    ("PathID", "INTEGER NOT NULL REFERENCES T_D(ID)", "Serialized unit the step was executed on (T_D.ID).", "fk_d"),
    ("UnitNumber", "TEXT", "Unit code, matches T_G.UnitNumber.", "unit_code_ref"),
    ("StepNumber", "INTEGER", "Sequence number of the step in the routing.", "step"),
    ("Operation", "TEXT", "Operation performed.", "operation"),
    ("Workcenter", "TEXT", "Workcenter where the step ran.", "workcenter"),
    ("StartedAt", "TEXT", "Timestamp the step started.", "date"),
    ("FinishedAt", "TEXT", "Timestamp the step finished.", "date"),
    ("DurationMin", "REAL", "Duration of the step in minutes.", "minutes"),
    ("Operator", "TEXT", "Operator who executed the step.", "person"),
    ("StepResult", "TEXT", "Result of the step OK or NOK.", "ok_nok"),
    ("MachineId", "TEXT", "Machine used.", "machine"),
    ("NonConformity", "TEXT", "Non-conformity report raised, if any.", "nc_or_null"),
    ("ScrapFlag", "INTEGER", "1 when the unit was scrapped at this step.", "flag_rare"),
    ("Shift", "TEXT", None, "shift"),
    ("LastModified", "TEXT", None, "date"),
] + filler("UserFieldF", 51)

T_G = [
    ("idG", "INTEGER PRIMARY KEY", "Internal identifier of the inspection record.", "pk"),
    ("UnitNumber", "TEXT NOT NULL", "Unit code inspected; matches T_A.CurrentCode.", "unit_code_ref"),
    ("InspectionDate", "TEXT", "Date of the quality inspection.", "date"),
    ("InspectionType", "TEXT", "Type: INCOMING, IN_PROCESS, FINAL.", "insp_type"),
    ("Inspector", "TEXT", "Inspector name.", "person"),
    ("Result", "TEXT", "Inspection outcome PASS or FAIL.", "pass_fail"),
    ("DefectCode", "TEXT", "Defect code when the inspection failed.", "defect_or_null"),
    ("DefectCount", "INTEGER", "Number of defects found.", "tiny_int"),
    ("SampleSize", "INTEGER", "Units sampled.", "small_int"),
    ("Disposition", "TEXT", "Disposition: ACCEPT, REWORK, SCRAP.", "disposition"),
    ("CertificateRef", "TEXT", "Reference of the conformity certificate.", "certificate"),
    ("Program", "TEXT", "Program the inspection is charged to.", "program"),
    ("Plant", "TEXT", None, "plant"),
    ("LastModified", "TEXT", None, "date"),
] + filler("UserFieldG", 40)

TABLES = [("T_A", T_A, 40), ("T_B", T_B, 300), ("T_C", T_C, 40), ("T_D", T_D, 200),
          ("T_E", T_E, 280), ("T_F", T_F, 600), ("T_G", T_G, 200)]

EXPECTED = {"T_A": 28, "T_B": 77, "T_C": 15, "T_D": 37, "T_E": 43, "T_F": 67, "T_G": 54}

rng = random.Random(RANDOM_SEED)
BASE = date(2023, 1, 1)
FIRST = ["Ana", "Luis", "Marta", "Pablo", "Irene", "Sergio", "Elena", "Raul", "Nuria", "Diego"]
LAST = ["Garcia", "Lopez", "Martin", "Sanz", "Ruiz", "Diez", "Alonso", "Moreno"]
CUSTOMERS = ["CUST-ALPHA", "CUST-BRAVO", "CUST-CHARLIE", "CUST-DELTA", "CUST-ECHO"]
PROGRAMS = ["PRG-ATLAS", "PRG-BOREAS", "PRG-CETUS"]


def pick(seq):
    return rng.choice(seq)


def make_value(key, row, ctx):
    if key == "pk":
        return row + 1
    if key == "fk_a":
        return rng.randint(1, ctx["n_a"])
    if key == "fk_a_unique":
        return row + 1
    if key == "fk_b_unique":
        return row + 1
    if key == "fk_c":
        return rng.randint(1, ctx["n_c"])
    if key == "fk_d":
        return rng.randint(1, ctx["n_d"])
    if key == "unit_code_a":
        return f"U{row + 1:04d}"
    if key == "unit_code_ref":
        return f"U{rng.randint(1, ctx['n_a']):04d}"
    if key == "part_number":
        return f"PN-{10000 + row * 37}"
    if key == "part_desc":
        return pick(["Gearbox housing", "Guidance board", "Turret bearing", "Hydraulic valve",
                     "Optical sight", "Cable harness", "Power module", "Actuator arm"])
    if key == "family":
        return pick(["MECHANICAL", "ELECTRONIC", "OPTICAL", "HYDRAULIC"])
    if key == "revision":
        return pick("ABCDE")
    if key == "uom":
        return pick(["EA", "KG", "M"])
    if key == "money":
        return round(rng.uniform(5, 900), 2)
    if key == "money_hi":
        return round(rng.uniform(500, 25000), 2)
    if key == "weight":
        return round(rng.uniform(0.2, 120), 3)
    if key == "part_status":
        return pick(["ACTIVE", "ACTIVE", "ACTIVE", "OBSOLETE", "PROTOTYPE"])
    if key == "date":
        return (BASE + timedelta(days=rng.randint(0, 729))).isoformat()
    if key == "ship_date":
        return (BASE + timedelta(days=rng.randint(0, 729))).isoformat()
    if key == "date_or_null":
        return None if rng.random() < 0.3 else (BASE + timedelta(days=rng.randint(0, 729))).isoformat()
    if key == "small_int":
        return rng.randint(1, 60)
    if key == "tiny_int":
        return rng.randint(0, 4)
    if key == "qty":
        return rng.randint(1, 50)
    if key == "warehouse":
        return pick(["WH-01", "WH-02", "WH-03"])
    if key == "flag":
        return 1 if rng.random() < 0.25 else 0
    if key == "flag_rare":
        return 1 if rng.random() < 0.03 else 0
    if key == "drawing":
        return f"DWG-{rng.randint(1000, 9999)}"
    if key == "material":
        return pick(["AL7075", "TI6AL4V", "STEEL4340", "FR4", "PEEK"])
    if key == "supplier":
        return pick(["SUP-A", "SUP-B", "SUP-C", "SUP-D"])
    if key == "make_buy":
        return pick("MB")
    if key == "plant":
        return pick(["BURGOS", "MADRID"])
    if key == "abc":
        return pick("ABC")
    if key == "order_number":
        return f"OF-{23000 + row}"
    if key == "order_number_or_null":
        return None if rng.random() < 0.8 else f"OF-{23000 + rng.randint(0, 299)}"
    if key == "order_status":
        return pick(["PLANNED", "RELEASED", "IN_PROGRESS", "CLOSED", "CLOSED"])
    if key == "priority":
        return rng.randint(1, 5)
    if key == "customer":
        return pick(CUSTOMERS)
    if key == "contract":
        return f"CTR-{rng.randint(100, 140)}"
    if key == "workcenter":
        return pick(["WC-MILL", "WC-LATHE", "WC-ASSY", "WC-TEST", "WC-PAINT"])
    if key == "hours":
        return round(rng.uniform(1, 200), 1)
    if key == "minutes":
        return round(rng.uniform(5, 480), 1)
    if key == "batch":
        return f"B{rng.randint(1, 40):03d}"
    if key == "person":
        return f"{pick(FIRST)} {pick(LAST)}"
    if key == "remark":
        return pick(["", "Urgent", "Customer witness required", "Pending material", "Split lot"])
    if key == "email":
        return f"approver{rng.randint(1, 9)}@example.com"
    if key == "program":
        return pick(PROGRAMS)
    if key == "cost_center":
        return f"CC-{rng.randint(10, 19)}"
    if key == "currency":
        return "EUR"
    if key == "shift":
        return pick(["MORNING", "AFTERNOON", "NIGHT"])
    if key == "sheet_code":
        return f"TS-{row + 1:03d}"
    if key == "standard":
        return pick(["MIL-STD-810", "MIL-STD-461", "ISO-2768", "AQAP-2110"])
    if key == "tolerance":
        return pick(["f", "m", "c"])
    if key == "finish":
        return pick(["Ra0.8", "Ra1.6", "Ra3.2"])
    if key == "heat":
        return pick(["NONE", "T6", "QT"])
    if key == "insp_level":
        return pick(["I", "II", "III"])
    if key == "classification":
        return pick(["UNCLASSIFIED", "RESTRICTED"])
    if key == "serial":
        return f"SN{rng.randint(100000, 999999)}"
    if key == "unit_status":
        return pick(["IN_STOCK", "SHIPPED", "SHIPPED", "SCRAPPED", "REWORK"])
    if key == "location":
        return pick(["RACK-A1", "RACK-B4", "CAGE-2", "FIELD"])
    if key == "firmware":
        return pick(["1.0.3", "1.1.0", "2.0.1"])
    if key == "pass_fail":
        return "PASS" if rng.random() < 0.85 else "FAIL"
    if key == "shipment_number":
        return f"ALB-{50000 + row}"
    if key == "country":
        return pick(["ES", "FR", "DE", "IT", "PL"])
    if key == "carrier":
        return pick(["CARRIER-1", "CARRIER-2", "CARRIER-3"])
    if key == "incoterm":
        return pick(["EXW", "FCA", "DAP", "DDP"])
    if key == "invoice":
        return f"INV-{80000 + row}"
    if key == "delivery_status":
        return pick(["IN_TRANSIT", "DELIVERED", "DELIVERED", "RETURNED"])
    if key == "license":
        return None if rng.random() < 0.5 else f"EXL-{rng.randint(100, 999)}"
    if key == "packaging":
        return pick(["CRATE", "BOX", "PALLET"])
    if key == "step":
        return rng.randint(1, 12) * 10
    if key == "operation":
        return pick(["MILLING", "TURNING", "ASSEMBLY", "PAINTING", "TESTING", "INSPECTION"])
    if key == "ok_nok":
        return "OK" if rng.random() < 0.9 else "NOK"
    if key == "machine":
        return f"M-{rng.randint(1, 25):02d}"
    if key == "nc_or_null":
        return None if rng.random() < 0.92 else f"NC-{rng.randint(1, 300):04d}"
    if key == "insp_type":
        return pick(["INCOMING", "IN_PROCESS", "FINAL"])
    if key == "defect_or_null":
        return None if rng.random() < 0.8 else pick(["D-SCRATCH", "D-DIM", "D-ELEC", "D-PAINT"])
    if key == "disposition":
        return pick(["ACCEPT", "ACCEPT", "ACCEPT", "REWORK", "SCRAP"])
    if key == "certificate":
        return f"COC-{rng.randint(1000, 9999)}"
    if key == "user_text":
        return None if rng.random() < 0.85 else pick(["X", "Y", "Z"])
    raise KeyError(key)


def literal(v):
    if v is None:
        return "NULL"
    if isinstance(v, str):
        return "'" + v.replace("'", "''") + "'"
    return repr(v)


def main():
    ctx = {"n_a": 40, "n_c": 40, "n_d": 200}
    out = ["-- Synthetic ERP fixture: 7 tables, 321 columns, one declared foreign key.",
           "-- Generated by fixtures/tools/generate_fixture.py; do not edit by hand.",
           "PRAGMA foreign_keys = ON;", "BEGIN;"]
    total = 0
    described = 0
    for name, cols, _ in TABLES:
        assert len(cols) == EXPECTED[name], (name, len(cols))
        assert len({c[0] for c in cols}) == len(cols), name
        total += len(cols)
        out.append(f"CREATE TABLE {name} (")
        for i, (col, typ, desc, _) in enumerate(cols):
            sep = "," if i + 1 < len(cols) else ""
            line = f"    {col} {typ}{sep}"
            if desc:
                line += f" -- {desc}"
                described += 1
            out.append(line)
        out.append(");")
    assert total == 321, total
    assert described == 119, described
    for name, cols, n_rows in TABLES:
        rows = []
        for r in range(n_rows):
            rows.append("(" + ", ".join(literal(make_value(c[3], r, ctx)) for c in cols) + ")")
        for chunk in range(0, len(rows), 100):
            out.append(f"INSERT INTO {name} VALUES")
            out.append(",\n".join(rows[chunk:chunk + 100]) + ";")
    out.append("COMMIT;")
    with open("fixtures/erp_seed.sql", "w") as f:
        f.write("\n".join(out) + "\n")


if __name__ == "__main__":
    main()
