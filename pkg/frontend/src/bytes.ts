// Byte-level helpers shared by the codec, credentials and signing.

export function utf8Encode(text: string): Uint8Array {
    return new TextEncoder().encode(text);
}

export function utf8Decode(data: Uint8Array): string {
    return new TextDecoder("utf-8", { fatal: true }).decode(data);
}

export function b64Encode(data: Uint8Array): string {
    let raw = "";
    // fromCharCode has an argument-count limit, so feed it in slices
    for (let i = 0; i < data.length; i += 0x8000) {
        raw += String.fromCharCode(...data.subarray(i, i + 0x8000));
    }
    return btoa(raw);
}

export function b64Decode(text: string): Uint8Array {
    const raw = atob(text); // throws on anything outside the alphabet
    const out = new Uint8Array(raw.length);
    for (let i = 0; i < raw.length; i++) {
        out[i] = raw.charCodeAt(i);
    }
    return out;
}

// base64url without padding, as JSON Web Keys want it
export function b64UrlEncode(data: Uint8Array): string {
    return b64Encode(data).replace(/\+/g, "-").replace(/\//g, "_").replace(/=+$/, "");
}

export function toHex(data: Uint8Array): string {
    let out = "";
    for (const byte of data) {
        out += byte.toString(16).padStart(2, "0");
    }
    return out;
}

export function concatBytes(parts: Uint8Array[]): Uint8Array {
    let total = 0;
    for (const part of parts) {
        total += part.length;
    }
    const out = new Uint8Array(total);
    let at = 0;
    for (const part of parts) {
        out.set(part, at);
        at += part.length;
    }
    return out;
}
