// Canonical certificate document parsing and the pure service decision.

export interface Certificate {
  test_id: string;
  user_name: string;
  test_type: string;
  result: string;
  taken_at: number;
  valid_until: number;
  lab_name: string;
}

export function parseCertificate(plain: Uint8Array): Certificate {
  const obj = JSON.parse(new TextDecoder().decode(plain));
  for (const field of [
    "test_id",
    "user_name",
    "test_type",
    "result",
    "taken_at",
    "valid_until",
    "lab_name",
  ]) {
    if (!(field in obj)) throw new Error(`certificate missing ${field}`);
  }
  return obj as Certificate;
}

export type Decision = "GRANT" | "DENY";

export function decide(
  certificate: Certificate,
  nowMs: number,
  requiredResult: string,
): Decision {
  return certificate.result === requiredResult && nowMs < certificate.valid_until
    ? "GRANT"
    : "DENY";
}
