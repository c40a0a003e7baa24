// XML-RPC wire codec for the browser side of the console.
//
// Values map to: number (int or double on the wire), boolean, string,
// Uint8Array (base64), Date (dateTime.iso8601, second precision, UTC
// fields), array and plain object (struct). JavaScript has a single
// number type, so integral numbers inside the 32-bit signed range travel
// as <int> and everything else finite as <double>; integral values beyond
// 32 bits must be sent as decimal strings, which the server's size and
// offset parameters accept by contract.
//
// The decoder is total over strings: every non-conforming input raises
// DecodeError, never anything else. A scoped parser is used instead of
// DOMParser because DOMParser signals XML errors by producing an
// engine-specific <parsererror> document rather than throwing, and the
// console must treat malformed replies as a typed failure everywhere.

import { b64Decode, b64Encode } from "./bytes.js";

export const MAX_DEPTH = 64;
export const MAX_PARAMS = 64;
export const DEFAULT_MAX_CHARS = 64 * 1024 * 1024;

const INT32_MIN = -(2 ** 31);
const INT32_MAX = 2 ** 31 - 1;

// parser recursion guard; generous next to MAX_DEPTH but keeps a hostile
// document from exhausting the call stack before value checks run
const MAX_PARSE_DEPTH = 512;

const METHOD_RE = /^[a-z_][a-z0-9_]*\.[a-z_][a-z0-9_]*$/;
// control characters and lone surrogates cannot travel in XML 1.0 text
const BAD_TEXT_RE =
    /[\u0000-\u0008\u000b\u000c\u000e-\u001f]|[\ud800-\udbff](?![\udc00-\udfff])|(?<![\ud800-\udbff])[\udc00-\udfff]/;
const DATETIME_RE = /^(\d{4})-?(\d{2})-?(\d{2})T(\d{2}):(\d{2}):(\d{2})Z?$/;
const INT_RE = /^[+-]?\d+$/;
const DOUBLE_RE = /^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$/;

export type RpcValue =
    | number
    | boolean
    | string
    | Uint8Array
    | Date
    | RpcValue[]
    | { [key: string]: RpcValue };

export class WireError extends Error {}

export class EncodeError extends WireError {}

export class DecodeError extends WireError {}

export class RpcFault extends Error {
    readonly code: number;
    readonly faultMessage: string;

    constructor(code: number, message: string) {
        super(`fault ${code}: ${message}`);
        this.code = code;
        this.faultMessage = message;
    }
}

export function validMethodName(name: string): boolean {
    return METHOD_RE.test(name);
}

// ---------------------------------------------------------------------------
// Encoding
// ---------------------------------------------------------------------------

function checkText(text: string): string {
    if (BAD_TEXT_RE.test(text)) {
        throw new EncodeError("string contains characters not representable in XML");
    }
    return text;
}

function escapeXml(text: string): string {
    // \r must ride as a character reference or the receiving parser would
    // fold it into \n during line-ending normalization
    return text
        .replace(/&/g, "&amp;")
        .replace(/</g, "&lt;")
        .replace(/>/g, "&gt;")
        .replace(/\r/g, "&#13;");
}

function pad(n: number, width: number): string {
    return String(n).padStart(width, "0");
}

function encodeDate(value: Date): string {
    if (Number.isNaN(value.getTime())) {
        throw new EncodeError("invalid Date");
    }
    return (
        pad(value.getUTCFullYear(), 4) +
        pad(value.getUTCMonth() + 1, 2) +
        pad(value.getUTCDate(), 2) +
        "T" +
        pad(value.getUTCHours(), 2) +
        ":" +
        pad(value.getUTCMinutes(), 2) +
        ":" +
        pad(value.getUTCSeconds(), 2)
    );
}

function encodeValue(value: RpcValue, depth: number): string {
    if (depth > MAX_DEPTH) {
        throw new EncodeError(`value nesting exceeds ${MAX_DEPTH}`);
    }
    if (typeof value === "boolean") {
        return `<value><boolean>${value ? "1" : "0"}</boolean></value>`;
    }
    if (typeof value === "number") {
        if (!Number.isFinite(value)) {
            throw new EncodeError("non-finite number not representable");
        }
        if (Number.isInteger(value) && value >= INT32_MIN && value <= INT32_MAX) {
            return `<value><int>${value}</int></value>`;
        }
        return `<value><double>${String(value)}</double></value>`;
    }
    if (typeof value === "string") {
        return `<value><string>${escapeXml(checkText(value))}</string></value>`;
    }
    if (value instanceof Uint8Array) {
        return `<value><base64>${b64Encode(value)}</base64></value>`;
    }
    if (value instanceof Date) {
        return `<value><dateTime.iso8601>${encodeDate(value)}</dateTime.iso8601></value>`;
    }
    if (Array.isArray(value)) {
        const items = value.map((item) => encodeValue(item, depth + 1)).join("");
        return `<value><array><data>${items}</data></array></value>`;
    }
    if (value !== null && typeof value === "object") {
        let members = "";
        for (const [key, item] of Object.entries(value)) {
            members +=
                `<member><name>${escapeXml(checkText(key))}</name>` +
                encodeValue(item, depth + 1) +
                "</member>";
        }
        return `<value><struct>${members}</struct></value>`;
    }
    throw new EncodeError(`cannot encode value of type ${typeof value}`);
}

export function encodeRequest(method: string, params: RpcValue[]): string {
    if (!validMethodName(method)) {
        throw new EncodeError(`invalid method name ${JSON.stringify(method)}`);
    }
    if (params.length > MAX_PARAMS) {
        throw new EncodeError(`too many params (${params.length} > ${MAX_PARAMS})`);
    }
    const body = params.map((p) => `<param>${encodeValue(p, 1)}</param>`).join("");
    return (
        '<?xml version="1.0"?><methodCall><methodName>' +
        method +
        `</methodName><params>${body}</params></methodCall>`
    );
}

// ---------------------------------------------------------------------------
// XML parsing (protocol subset: elements, character data, comments, CDATA)
// ---------------------------------------------------------------------------

interface XmlElement {
    name: string;
    children: XmlElement[];
    text: string;
}

const NAME_RE = /[A-Za-z_:][A-Za-z0-9._:-]*/y;
const ENTITIES: { [name: string]: string } = {
    lt: "<",
    gt: ">",
    amp: "&",
    quot: '"',
    apos: "'",
};

class Parser {
    private pos = 0;

    constructor(private readonly input: string) {}

    private fail(message: string): never {
        throw new DecodeError(`${message} at offset ${this.pos}`);
    }

    private startsWith(token: string): boolean {
        return this.input.startsWith(token, this.pos);
    }

    private skipMisc(): void {
        for (;;) {
            while (/\s/.test(this.input[this.pos] ?? "")) {
                this.pos++;
            }
            if (this.startsWith("<!--")) {
                const end = this.input.indexOf("-->", this.pos + 4);
                if (end < 0) this.fail("unterminated comment");
                this.pos = end + 3;
            } else if (this.startsWith("<?")) {
                const end = this.input.indexOf("?>", this.pos + 2);
                if (end < 0) this.fail("unterminated processing instruction");
                this.pos = end + 2;
            } else {
                return;
            }
        }
    }

    private readName(): string {
        NAME_RE.lastIndex = this.pos;
        const m = NAME_RE.exec(this.input);
        if (!m) this.fail("expected a name");
        this.pos += m[0].length;
        return m[0];
    }

    private decodeEntities(raw: string): string {
        if (!raw.includes("&")) {
            return raw;
        }
        let out = "";
        let i = 0;
        while (i < raw.length) {
            const ch = raw[i];
            if (ch !== "&") {
                out += ch;
                i++;
                continue;
            }
            const semi = raw.indexOf(";", i + 1);
            if (semi < 0) this.fail("unterminated entity reference");
            const body = raw.slice(i + 1, semi);
            if (Object.prototype.hasOwnProperty.call(ENTITIES, body)) {
                out += ENTITIES[body];
            } else if (/^#\d+$/.test(body)) {
                out += this.codePoint(parseInt(body.slice(1), 10));
            } else if (/^#x[0-9A-Fa-f]+$/.test(body)) {
                out += this.codePoint(parseInt(body.slice(2), 16));
            } else {
                this.fail(`unknown entity &${body};`);
            }
            i = semi + 1;
        }
        return out;
    }

    private codePoint(cp: number): string {
        if (!Number.isInteger(cp) || cp < 0 || cp > 0x10ffff) {
            this.fail("character reference out of range");
        }
        try {
            return String.fromCodePoint(cp);
        } catch {
            this.fail("character reference out of range");
        }
    }

    private skipTagRest(): boolean {
        // consumes attributes up to '>' or '/>'; returns true if self-closing
        for (;;) {
            const ch = this.input[this.pos];
            if (ch === undefined) this.fail("unterminated tag");
            if (ch === '"' || ch === "'") {
                const close = this.input.indexOf(ch, this.pos + 1);
                if (close < 0) this.fail("unterminated attribute value");
                this.pos = close + 1;
            } else if (ch === ">") {
                this.pos++;
                return false;
            } else if (ch === "/" && this.input[this.pos + 1] === ">") {
                this.pos += 2;
                return true;
            } else {
                this.pos++;
            }
        }
    }

    private element(depth: number): XmlElement {
        if (depth > MAX_PARSE_DEPTH) {
            this.fail(`element nesting exceeds ${MAX_PARSE_DEPTH}`);
        }
        if (this.input[this.pos] !== "<") this.fail("expected an element");
        this.pos++;
        const name = this.readName();
        const node: XmlElement = { name, children: [], text: "" };
        if (this.skipTagRest()) {
            return node;
        }
        for (;;) {
            if (this.pos >= this.input.length) {
                this.fail(`unterminated <${name}>`);
            }
            if (this.startsWith("</")) {
                this.pos += 2;
                const closing = this.readName();
                while (/\s/.test(this.input[this.pos] ?? "")) this.pos++;
                if (this.input[this.pos] !== ">") this.fail("malformed closing tag");
                this.pos++;
                if (closing !== name) {
                    this.fail(`mismatched </${closing}> for <${name}>`);
                }
                return node;
            }
            if (this.startsWith("<!--")) {
                const end = this.input.indexOf("-->", this.pos + 4);
                if (end < 0) this.fail("unterminated comment");
                this.pos = end + 3;
            } else if (this.startsWith("<![CDATA[")) {
                const end = this.input.indexOf("]]>", this.pos + 9);
                if (end < 0) this.fail("unterminated CDATA section");
                node.text += this.input.slice(this.pos + 9, end).replace(/\r\n?/g, "\n");
                this.pos = end + 3;
            } else if (this.startsWith("<!") || this.startsWith("<?")) {
                this.fail("markup declarations are not accepted here");
            } else if (this.input[this.pos] === "<") {
                node.children.push(this.element(depth + 1));
            } else {
                const next = this.input.indexOf("<", this.pos);
                if (next < 0) this.fail(`unterminated <${name}>`);
                const raw = this.input.slice(this.pos, next).replace(/\r\n?/g, "\n");
                node.text += this.decodeEntities(raw);
                this.pos = next;
            }
        }
    }

    document(): XmlElement {
        if (this.input[this.pos] === "﻿") {
            this.pos++;
        }
        this.skipMisc();
        const root = this.element(0);
        this.skipMisc();
        if (this.pos !== this.input.length) {
            this.fail("trailing content after document element");
        }
        return root;
    }
}

function parseDocument(text: string, maxChars: number): XmlElement {
    if (typeof text !== "string") {
        throw new DecodeError("document must be a string");
    }
    if (text.length > maxChars) {
        throw new DecodeError(`document exceeds ${maxChars} characters`);
    }
    if (text.includes("<!DOCTYPE") || text.includes("<!ENTITY")) {
        throw new DecodeError("DTD declarations are not accepted");
    }
    return new Parser(text).document();
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

function decodeInt(text: string): number {
    const trimmed = text.trim();
    if (!INT_RE.test(trimmed)) {
        throw new DecodeError(`bad integer ${JSON.stringify(text)}`);
    }
    const value = Number(trimmed);
    if (value < INT32_MIN || value > INT32_MAX) {
        throw new DecodeError(`integer ${trimmed} outside 32-bit signed range`);
    }
    return value;
}

function decodeDouble(text: string): number {
    const trimmed = text.trim();
    if (!DOUBLE_RE.test(trimmed)) {
        throw new DecodeError(`bad double ${JSON.stringify(text)}`);
    }
    const value = Number(trimmed);
    if (!Number.isFinite(value)) {
        throw new DecodeError("non-finite double");
    }
    return value;
}

function decodeDate(text: string): Date {
    const m = DATETIME_RE.exec(text.trim());
    if (!m) {
        throw new DecodeError(`bad dateTime ${JSON.stringify(text)}`);
    }
    const [year, month, day, hour, minute, second] = m.slice(1).map(Number);
    const date = new Date(0);
    date.setUTCFullYear(year, month - 1, day);
    date.setUTCHours(hour, minute, second, 0);
    // Date rolls invalid fields over instead of rejecting them
    if (
        year < 1 ||
        date.getUTCFullYear() !== year ||
        date.getUTCMonth() !== month - 1 ||
        date.getUTCDate() !== day ||
        date.getUTCHours() !== hour ||
        date.getUTCMinutes() !== minute ||
        date.getUTCSeconds() !== second
    ) {
        throw new DecodeError(`bad dateTime ${JSON.stringify(text)}`);
    }
    return date;
}

function scalarText(el: XmlElement): string {
    if (el.children.length > 0) {
        throw new DecodeError(`unexpected element inside <${el.name}>`);
    }
    return el.text;
}

function decodeValue(el: XmlElement, depth: number): RpcValue {
    if (depth > MAX_DEPTH) {
        throw new DecodeError(`value nesting exceeds ${MAX_DEPTH}`);
    }
    if (el.children.length === 0) {
        // omitted type tag defaults to string
        return el.text;
    }
    if (el.children.length !== 1) {
        throw new DecodeError("<value> must contain at most one type element");
    }
    if (el.text.trim() !== "") {
        throw new DecodeError("stray text alongside typed value");
    }
    const child = el.children[0];
    switch (child.name) {
        case "int":
        case "i4":
            return decodeInt(scalarText(child));
        case "boolean": {
            const flag = scalarText(child).trim();
            if (flag === "1") return true;
            if (flag === "0") return false;
            throw new DecodeError(`bad boolean ${JSON.stringify(child.text)}`);
        }
        case "double":
            return decodeDouble(scalarText(child));
        case "string":
            return scalarText(child);
        case "dateTime.iso8601":
            return decodeDate(scalarText(child));
        case "base64": {
            const compact = scalarText(child).replace(/\s+/g, "");
            try {
                return b64Decode(compact);
            } catch {
                throw new DecodeError("bad base64 payload");
            }
        }
        case "array": {
            if (child.children.length !== 1 || child.children[0].name !== "data") {
                throw new DecodeError("<array> must contain exactly one <data>");
            }
            const out: RpcValue[] = [];
            for (const item of child.children[0].children) {
                if (item.name !== "value") {
                    throw new DecodeError(`unexpected <${item.name}> in array data`);
                }
                out.push(decodeValue(item, depth + 1));
            }
            return out;
        }
        case "struct": {
            const out: { [key: string]: RpcValue } = {};
            for (const member of child.children) {
                if (member.name !== "member") {
                    throw new DecodeError(`unexpected <${member.name}> in struct`);
                }
                const nameEl = member.children.find((c) => c.name === "name");
                const valueEl = member.children.find((c) => c.name === "value");
                if (!nameEl || !valueEl) {
                    throw new DecodeError("struct member missing name or value");
                }
                // duplicate keys: last one wins
                out[nameEl.text] = decodeValue(valueEl, depth + 1);
            }
            return out;
        }
        default:
            throw new DecodeError(`unknown value tag <${child.name}>`);
    }
}

function singleValue(parent: XmlElement, what: string): XmlElement {
    if (parent.children.length !== 1 || parent.children[0].name !== "value") {
        throw new DecodeError(`${what} must contain exactly one value`);
    }
    return parent.children[0];
}

function decodeFault(faultEl: XmlElement): RpcFault {
    // validated on the element tree: the fault code must be wire-typed as
    // an integer, not merely decode to a number
    const valueEl = singleValue(faultEl, "fault");
    if (valueEl.children.length !== 1 || valueEl.children[0].name !== "struct") {
        throw new DecodeError("fault payload must be a struct");
    }
    let code: number | null = null;
    let message: string | null = null;
    for (const member of valueEl.children[0].children) {
        if (member.name !== "member") {
            throw new DecodeError(`unexpected <${member.name}> in struct`);
        }
        const nameEl = member.children.find((c) => c.name === "name");
        const memberValue = member.children.find((c) => c.name === "value");
        if (!nameEl || !memberValue) {
            throw new DecodeError("struct member missing name or value");
        }
        if (nameEl.text === "faultCode") {
            if (memberValue.children.length !== 1) {
                throw new DecodeError("fault code must be a non-zero integer");
            }
            const tag = memberValue.children[0];
            if (tag.name !== "int" && tag.name !== "i4") {
                throw new DecodeError("fault code must be a non-zero integer");
            }
            code = decodeInt(scalarText(tag));
        } else if (nameEl.text === "faultString") {
            const payload = decodeValue(memberValue, 1);
            if (typeof payload !== "string") {
                throw new DecodeError("fault string must be a non-empty string");
            }
            message = payload;
        }
    }
    if (code === null || code === 0) {
        throw new DecodeError("fault code must be a non-zero integer");
    }
    if (!message) {
        throw new DecodeError("fault string must be a non-empty string");
    }
    return new RpcFault(code, message);
}

export function decodeResponse(
    text: string,
    maxChars: number = DEFAULT_MAX_CHARS,
): RpcValue | RpcFault {
    // faults are returned, not thrown, so callers can tell the two apart
    try {
        const root = parseDocument(text, maxChars);
        if (root.name !== "methodResponse") {
            throw new DecodeError(`expected <methodResponse>, got <${root.name}>`);
        }
        if (root.children.length === 1 && root.children[0].name === "params") {
            const params = root.children[0];
            if (params.children.length !== 1 || params.children[0].name !== "param") {
                throw new DecodeError("response must carry exactly one param");
            }
            return decodeValue(singleValue(params.children[0], "param"), 1);
        }
        if (root.children.length === 1 && root.children[0].name === "fault") {
            return decodeFault(root.children[0]);
        }
        throw new DecodeError("response must contain exactly one of <params> or <fault>");
    } catch (err) {
        if (err instanceof WireError) {
            throw err;
        }
        throw new DecodeError(`malformed response: ${err}`);
    }
}
