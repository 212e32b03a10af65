// Scannable QR image rendering for the fixed payload grammar.

import QRCode from "qrcode";

export function qrDataUrl(qrText: string): Promise<string> {
  return QRCode.toDataURL(qrText, { errorCorrectionLevel: "M", margin: 2, scale: 5 });
}
