// Remote file repository browser: directory listings as a navigable
// tree, stat fields and md5 on demand, whole-file download over chunked
// reads. Path faults surface as banners inside the screen.

import { clearErrors, showError } from "./banner.js";
import { clear, el } from "./dom.js";
import { ConsoleSession } from "./session.js";
import { RpcValue } from "./wire.js";

export interface Entry {
    name: string;
    kind: string;
    size: string;
    mtime: Date | null;
    readable: boolean;
}

export function joinPath(dir: string, name: string): string {
    return dir === "/" ? "/" + name : dir + "/" + name;
}

export function parentPath(path: string): string {
    // computed locally: the server refuses any path containing ".."
    const cut = path.lastIndexOf("/");
    return cut <= 0 ? "/" : path.slice(0, cut);
}

function toEntry(value: RpcValue): Entry {
    const rec = (value ?? {}) as { [key: string]: RpcValue };
    return {
        name: typeof rec.name === "string" ? rec.name : "",
        kind: typeof rec.kind === "string" ? rec.kind : "",
        size: typeof rec.size === "string" ? rec.size : "",
        mtime: rec.mtime instanceof Date ? rec.mtime : null,
        readable: rec.readable === true,
    };
}

function mtimeLabel(entry: Entry): string {
    return entry.mtime ? entry.mtime.toISOString().slice(0, 19) + "Z" : "";
}

export class FileBrowser {
    path = "/";
    /** resolves when the most recently started operation has settled */
    pending: Promise<void> = Promise.resolve();

    private entries: Entry[] = [];
    private readonly banners: HTMLElement;
    private readonly crumb: HTMLElement;
    private readonly upButton: HTMLButtonElement;
    private readonly listHost: HTMLElement;
    private readonly detail: HTMLElement;

    constructor(host: HTMLElement, private readonly session: ConsoleSession) {
        this.banners = el("div", { class: "banners" });
        this.crumb = el("code", { class: "crumb" }, "/");
        this.upButton = el("button", { class: "up", type: "button" }, "up");
        this.upButton.onclick = () => this.open(parentPath(this.path));
        this.listHost = el("div", { class: "listing" });
        this.detail = el("div", { class: "detail" });
        host.append(
            this.banners,
            el("div", { class: "pathbar" }, this.upButton, " ", this.crumb),
            this.listHost,
            this.detail,
        );
    }

    list(): { kind: string; size: string; name: string }[] {
        return this.entries.map((e) => ({ kind: e.kind, size: e.size, name: e.name }));
    }

    open(path: string): Promise<void> {
        this.pending = this.refresh(path);
        return this.pending;
    }

    private async refresh(path: string): Promise<void> {
        clearErrors(this.banners);
        let listed;
        try {
            listed = await this.session.call("file.ls", [path]);
        } catch (err) {
            showError(this.banners, err);
            return;
        }
        this.path = path;
        this.entries = listed.map(toEntry);
        this.crumb.textContent = path;
        this.upButton.disabled = path === "/";
        clear(this.detail);
        this.renderListing();
    }

    private renderListing(): void {
        clear(this.listHost);
        if (this.entries.length === 0) {
            this.listHost.append(el("p", { class: "empty" }, "(empty directory)"));
            return;
        }
        const body = el("tbody");
        for (const entry of this.entries) {
            const row = el(
                "tr",
                { class: entry.kind, "data-name": entry.name, "data-kind": entry.kind },
                el("td", { class: "kind" }, entry.kind),
                el("td", { class: "size" }, entry.size),
                el("td", { class: "name" }, entry.name),
            );
            row.onclick = () => {
                this.pending =
                    entry.kind === "directory"
                        ? this.refresh(joinPath(this.path, entry.name))
                        : this.inspect(entry);
            };
            body.append(row);
        }
        this.listHost.append(
            el(
                "table",
                { class: "entries" },
                el(
                    "thead",
                    {},
                    el("tr", {}, el("th", {}, "kind"), el("th", {}, "size"), el("th", {}, "name")),
                ),
                body,
            ),
        );
    }

    private async inspect(entry: Entry): Promise<void> {
        clearErrors(this.banners);
        const path = joinPath(this.path, entry.name);
        let stat: Entry;
        try {
            stat = toEntry((await this.session.call("file.stat", [path]))[0]);
        } catch (err) {
            showError(this.banners, err);
            return;
        }
        clear(this.detail);
        const fields = el(
            "dl",
            { class: "stat" },
            el("dt", {}, "name"),
            el("dd", { class: "stat-name" }, stat.name),
            el("dt", {}, "kind"),
            el("dd", { class: "stat-kind" }, stat.kind),
            el("dt", {}, "size"),
            el("dd", { class: "stat-size" }, stat.size),
            el("dt", {}, "modified"),
            el("dd", { class: "stat-mtime" }, mtimeLabel(stat)),
        );
        const digest = el("code", { class: "md5" });
        const md5Button = el("button", { type: "button" }, "md5");
        md5Button.onclick = () => {
            this.pending = this.md5(path, digest);
        };
        const progress = el("span", { class: "progress" });
        const downloadButton = el("button", { type: "button" }, "download");
        downloadButton.onclick = () => {
            this.pending = this.download(path, entry.name, progress).then(() => undefined);
        };
        this.detail.append(
            el("h3", {}, path),
            fields,
            el("div", { class: "actions" }, md5Button, " ", digest, " ", downloadButton, " ", progress),
        );
    }

    private async md5(path: string, into: HTMLElement): Promise<void> {
        clearErrors(this.banners);
        try {
            const result = await this.session.call("file.md5", [path]);
            into.textContent = typeof result[0] === "string" ? result[0] : "";
        } catch (err) {
            showError(this.banners, err);
        }
    }

    async download(path: string, saveName: string, progress?: HTMLElement): Promise<Uint8Array | null> {
        clearErrors(this.banners);
        try {
            const data = await this.session.downloadFile(path, (n) => {
                if (progress) {
                    progress.textContent = `${n} bytes`;
                }
            });
            if (progress) {
                progress.textContent = `${data.length} bytes`;
            }
            offerSave(saveName, data);
            return data;
        } catch (err) {
            showError(this.banners, err);
            return null;
        }
    }
}

function offerSave(name: string, data: Uint8Array): void {
    // browser convenience only; environments without object URLs skip it
    try {
        if (typeof Blob === "undefined" || typeof URL.createObjectURL !== "function") {
            return;
        }
        const url = URL.createObjectURL(new Blob([data as BlobPart]));
        const anchor = el("a", { href: url, download: name });
        document.body.append(anchor);
        anchor.click();
        anchor.remove();
        URL.revokeObjectURL(url);
    } catch {
        // saving is best-effort; the banner path handles real failures
    }
}
