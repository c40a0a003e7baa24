// UiSession: one operator identity bound to one server, living only in
// page memory. Built either from pasted credential text or through the
// escrow bootstrap (proxy.retrieve with DN and password), which is the
// one documented call that answers unsigned requests.

import { CredentialError, parseCredential } from "./credential.js";
import {
    b64Decode,
    concatBytes,
    utf8Decode,
    utf8Encode,
} from "./bytes.js";
import {
    HEADER_SIGNATURE,
    HEADER_TIMESTAMP,
    importSigningKey,
    signRequest,
    verifyRequest,
} from "./signing.js";
import { decodeResponse, encodeRequest, DecodeError, RpcFault, RpcValue } from "./wire.js";

export class TransportError extends Error {}

export type FetchLike = (
    url: string,
    init: {
        method: string;
        headers: { [name: string]: string };
        body: Uint8Array;
    },
) => Promise<{ ok: boolean; status: number; text(): Promise<string> }>;

// what the screens need from a session; kept narrow so tests can stub it
export interface ConsoleSession {
    readonly dn: string;
    call(method: string, params?: RpcValue[]): Promise<RpcValue[]>;
    readFile(path: string, offset: number, nbytes: number): Promise<Uint8Array>;
    downloadFile(path: string, onProgress?: (bytes: number) => void): Promise<Uint8Array>;
}

const DOWNLOAD_CHUNK = 1 << 20;

const defaultFetch: FetchLike = (url, init) =>
    fetch(url, init as RequestInit) as Promise<any>;

export class UiSession implements ConsoleSession {
    requestCount = 0;

    private constructor(
        readonly baseUrl: string,
        readonly rpcPath: string,
        readonly dn: string,
        private readonly key: CryptoKey | null,
        private readonly fetchImpl: FetchLike,
    ) {}

    /** Unsigned session; only methods open to unauthenticated callers answer. */
    static anonymous(baseUrl: string, rpcPath: string, fetchImpl?: FetchLike): UiSession {
        return new UiSession(baseUrl, rpcPath, "", null, fetchImpl ?? defaultFetch);
    }

    static async fromCredentialText(
        baseUrl: string,
        rpcPath: string,
        text: string,
        fetchImpl?: FetchLike,
    ): Promise<UiSession> {
        const cred = parseCredential(text);
        if (cred.seed === null) {
            throw new CredentialError("credential has no private key block");
        }
        const now = Date.now();
        if (now < cred.notBefore.getTime() || now > cred.notAfter.getTime()) {
            throw new CredentialError("credential expired or not yet valid");
        }
        const key = await importSigningKey(cred.seed, cred.publicKey);
        // signing-path self check before any request leaves the page
        const probe = utf8Encode("probe");
        const headers = await signRequest(key, cred.dn, "POST", rpcPath, probe);
        const ok = await verifyRequest(
            cred.publicKey,
            b64Decode(headers[HEADER_SIGNATURE]),
            cred.dn,
            headers[HEADER_TIMESTAMP],
            "POST",
            rpcPath,
            probe,
        );
        if (!ok) {
            throw new CredentialError("request signature failed self-verification");
        }
        cred.seed.fill(0);
        return new UiSession(baseUrl, rpcPath, cred.dn, key, fetchImpl ?? defaultFetch);
    }

    static async fromEscrow(
        baseUrl: string,
        rpcPath: string,
        dn: string,
        password: string,
        fetchImpl?: FetchLike,
    ): Promise<UiSession> {
        const bootstrap = UiSession.anonymous(baseUrl, rpcPath, fetchImpl);
        const result = await bootstrap.call("proxy.retrieve", [dn, password]);
        if (typeof result[0] !== "string") {
            throw new TransportError("escrow returned something other than credential text");
        }
        return UiSession.fromCredentialText(baseUrl, rpcPath, result[0], fetchImpl);
    }

    async call(method: string, params: RpcValue[] = []): Promise<RpcValue[]> {
        const body = utf8Encode(encodeRequest(method, params));
        const headers: { [name: string]: string } = { "Content-Type": "text/xml" };
        if (this.key !== null) {
            Object.assign(
                headers,
                await signRequest(this.key, this.dn, "POST", this.rpcPath, body),
            );
        }
        let resp;
        try {
            resp = await this.fetchImpl(this.baseUrl + this.rpcPath, {
                method: "POST",
                headers,
                body,
            });
        } catch (err) {
            throw new TransportError(`request failed: ${err}`);
        }
        if (!resp.ok) {
            throw new TransportError(`HTTP ${resp.status}`);
        }
        this.requestCount++;
        const result = decodeResponse(await resp.text());
        if (result instanceof RpcFault) {
            throw result;
        }
        if (!Array.isArray(result)) {
            throw new DecodeError("method result was not a list");
        }
        return result;
    }

    async readFile(path: string, offset: number, nbytes: number): Promise<Uint8Array> {
        // offsets ride as decimal strings: the wire integer is 32-bit and
        // files are not
        const result = await this.call("file.read", [path, String(offset), nbytes]);
        if (!(result[0] instanceof Uint8Array)) {
            throw new DecodeError("file.read returned something other than bytes");
        }
        return result[0];
    }

    /** Whole-file fetch in bounded chunks; returns the assembled bytes. */
    async downloadFile(
        path: string,
        onProgress?: (bytes: number) => void,
    ): Promise<Uint8Array> {
        const parts: Uint8Array[] = [];
        let offset = 0;
        for (;;) {
            const chunk = await this.readFile(path, offset, DOWNLOAD_CHUNK);
            if (chunk.length === 0) {
                break;
            }
            parts.push(chunk);
            offset += chunk.length;
            if (onProgress) {
                onProgress(offset);
            }
        }
        return concatBytes(parts);
    }
}

/** Decoded text of a struct field that the server sends as a string. */
export function asString(value: RpcValue | undefined): string {
    return typeof value === "string" ? value : "";
}
