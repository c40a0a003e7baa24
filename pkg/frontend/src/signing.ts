// Per-request Ed25519 signing over
// ``dn NL timestamp NL http-method NL path NL sha256(body)``, carried in
// the three identity headers. Uses the platform WebCrypto implementation;
// no key material ever leaves the CryptoKey object.

import { b64Encode, b64UrlEncode, toHex, utf8Encode } from "./bytes.js";

export const HEADER_DN = "X-Clarens-DN";
export const HEADER_TIMESTAMP = "X-Clarens-Timestamp";
export const HEADER_SIGNATURE = "X-Clarens-Signature";

const ED25519 = { name: "Ed25519" };

export async function importSigningKey(
    seed: Uint8Array,
    publicKey: Uint8Array,
): Promise<CryptoKey> {
    if (seed.length !== 32 || publicKey.length !== 32) {
        throw new Error("Ed25519 seed and public key must be 32 bytes each");
    }
    const jwk: JsonWebKey = {
        kty: "OKP",
        crv: "Ed25519",
        d: b64UrlEncode(seed),
        x: b64UrlEncode(publicKey),
    };
    // extractable: false keeps the seed out of reach once imported
    return crypto.subtle.importKey("jwk", jwk, ED25519, false, ["sign"]);
}

export async function importVerifyKey(publicKey: Uint8Array): Promise<CryptoKey> {
    return crypto.subtle.importKey(
        "raw",
        publicKey as BufferSource,
        ED25519,
        false,
        ["verify"],
    );
}

export function formatTimestamp(now: Date = new Date()): string {
    // second precision, always UTC, trailing Z
    return now.toISOString().slice(0, 19) + "Z";
}

async function requestMessage(
    dn: string,
    timestamp: string,
    httpMethod: string,
    path: string,
    body: Uint8Array,
): Promise<Uint8Array> {
    const digest = await crypto.subtle.digest("SHA-256", body as BufferSource);
    const hex = toHex(new Uint8Array(digest));
    return utf8Encode([dn, timestamp, httpMethod, path, hex].join("\n"));
}

export async function signRequest(
    key: CryptoKey,
    dn: string,
    httpMethod: string,
    path: string,
    body: Uint8Array,
    timestamp: string = formatTimestamp(),
): Promise<{ [header: string]: string }> {
    const message = await requestMessage(dn, timestamp, httpMethod, path, body);
    const signature = await crypto.subtle.sign(ED25519, key, message as BufferSource);
    return {
        // the server percent-decodes this header before use
        [HEADER_DN]: encodeURIComponent(dn),
        [HEADER_TIMESTAMP]: timestamp,
        [HEADER_SIGNATURE]: b64Encode(new Uint8Array(signature)),
    };
}

export async function verifyRequest(
    publicKey: Uint8Array,
    signature: Uint8Array,
    dn: string,
    timestamp: string,
    httpMethod: string,
    path: string,
    body: Uint8Array,
): Promise<boolean> {
    const key = await importVerifyKey(publicKey);
    const message = await requestMessage(dn, timestamp, httpMethod, path, body);
    return crypto.subtle.verify(
        ED25519,
        key,
        signature as BufferSource,
        message as BufferSource,
    );
}
