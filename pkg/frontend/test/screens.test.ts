// Screen behavior against a stubbed session: rendering, navigation,
// banner lifecycle, and the exact RPC traffic each interaction emits.

import { beforeAll, beforeEach, describe, expect, test } from "vitest";
import { showError, clearErrors, errorLabel } from "../src/banner.js";
import { FileBrowser, joinPath, parentPath } from "../src/browse.js";
import { EchoScreen } from "../src/echo.js";
import { VoAdmin } from "../src/groups.js";
import { Connector, LoginScreen } from "../src/login.js";
import { ConsoleSession, UiSession } from "../src/session.js";
import { parseConfig } from "../src/app.js";
import { RpcFault, RpcValue } from "../src/wire.js";
import { installDom } from "./helpers.js";

type Handler = (params: RpcValue[]) => RpcValue[] | Promise<RpcValue[]>;

class StubSession implements ConsoleSession {
    dn = "/O=Console/CN=stub";
    calls: [string, RpcValue[]][] = [];
    handlers: { [method: string]: Handler } = {};
    files: { [path: string]: Uint8Array } = {};

    async call(method: string, params: RpcValue[] = []): Promise<RpcValue[]> {
        this.calls.push([method, params]);
        const handler = this.handlers[method];
        if (!handler) {
            throw new Error(`no stub handler for ${method}`);
        }
        return handler(params);
    }

    async readFile(path: string, offset: number, nbytes: number): Promise<Uint8Array> {
        const data = this.files[path];
        if (!data) {
            throw new RpcFault(404, `no such file ${path}`);
        }
        return data.slice(offset, offset + nbytes);
    }

    async downloadFile(
        path: string,
        onProgress?: (bytes: number) => void,
    ): Promise<Uint8Array> {
        const data = this.files[path];
        if (!data) {
            throw new RpcFault(404, `no such file ${path}`);
        }
        if (onProgress) {
            onProgress(data.length);
        }
        return data.slice();
    }

    methodsCalled(): string[] {
        return this.calls.map(([m]) => m);
    }
}

function host(): HTMLElement {
    const node = document.createElement("div");
    document.body.append(node);
    return node;
}

function entry(name: string, kind: string, size: number): { [key: string]: RpcValue } {
    return { name, kind, size: String(size), mtime: new Date(86400_000), readable: true };
}

function rowNames(root: HTMLElement): string[] {
    return Array.from(root.querySelectorAll("tbody tr")).map(
        (tr) => tr.getAttribute("data-name") ?? "",
    );
}

beforeAll(() => {
    installDom();
});

beforeEach(() => {
    document.body.innerHTML = "";
});

describe("path helpers", () => {
    test("joinPath and parentPath invert each other", () => {
        expect(joinPath("/", "a")).toBe("/a");
        expect(joinPath("/a", "b")).toBe("/a/b");
        expect(parentPath("/a/b")).toBe("/a");
        expect(parentPath("/a")).toBe("/");
        expect(parentPath("/")).toBe("/");
    });
});

describe("error banners", () => {
    test("labels keep fault code and message, wrap other errors", () => {
        expect(errorLabel(new RpcFault(403, "permission denied"))).toBe(
            "fault 403: permission denied",
        );
        expect(errorLabel(new Error("boom"))).toBe("error: boom");
        expect(errorLabel("loose string")).toBe("error: loose string");
    });

    test("banner renders as an alert and its dismiss button removes it", () => {
        const root = host();
        showError(root, new RpcFault(7, "x"));
        const banner = root.querySelector(".banner")!;
        expect(banner.getAttribute("role")).toBe("alert");
        expect(banner.querySelector(".banner-text")!.textContent).toBe("fault 7: x");
        (banner.querySelector(".banner-dismiss") as HTMLButtonElement).click();
        expect(root.querySelector(".banner")).toBeNull();
    });

    test("clearErrors removes every banner at once", () => {
        const root = host();
        showError(root, "a");
        showError(root, "b");
        expect(root.querySelectorAll(".banner").length).toBe(2);
        clearErrors(root);
        expect(root.querySelectorAll(".banner").length).toBe(0);
    });
});

describe("file browser", () => {
    function withListing(tree: { [path: string]: RpcValue[] }): StubSession {
        const stub = new StubSession();
        stub.handlers["file.ls"] = ([path]) => {
            const listed = tree[path as string];
            if (!listed) {
                throw new RpcFault(403, `path ${JSON.stringify(path)} denied`);
            }
            return listed;
        };
        return stub;
    }

    test("listing renders one row per entry, in server order", async () => {
        const stub = withListing({
            "/": [entry("docs", "directory", 0), entry("readme.txt", "file", 27)],
        });
        const root = host();
        const browser = new FileBrowser(root, stub);
        await browser.open("/");
        expect(rowNames(root)).toEqual(["docs", "readme.txt"]);
        expect(browser.list()).toEqual([
            { kind: "directory", size: "0", name: "docs" },
            { kind: "file", size: "27", name: "readme.txt" },
        ]);
        const up = root.querySelector(".up") as HTMLButtonElement;
        expect(up.disabled).toBe(true);
    });

    test("an empty directory is an explicit state, not a blank page", async () => {
        const stub = withListing({ "/": [] });
        const root = host();
        const browser = new FileBrowser(root, stub);
        await browser.open("/");
        expect(root.querySelector(".empty")!.textContent).toBe("(empty directory)");
        expect(root.querySelector("table")).toBeNull();
    });

    test("clicking a directory descends; up walks back", async () => {
        const stub = withListing({
            "/": [entry("docs", "directory", 0)],
            "/docs": [entry("inner.txt", "file", 5)],
        });
        const root = host();
        const browser = new FileBrowser(root, stub);
        await browser.open("/");
        (root.querySelector("tbody tr") as HTMLElement).click();
        await browser.pending;
        expect(browser.path).toBe("/docs");
        expect(root.querySelector(".crumb")!.textContent).toBe("/docs");
        expect(rowNames(root)).toEqual(["inner.txt"]);
        const up = root.querySelector(".up") as HTMLButtonElement;
        expect(up.disabled).toBe(false);
        up.click();
        await browser.pending;
        expect(browser.path).toBe("/");
        expect(rowNames(root)).toEqual(["docs"]);
    });

    test("a fault keeps the current listing and shows a banner in place", async () => {
        const stub = withListing({ "/": [entry("docs", "directory", 0)] });
        const root = host();
        const browser = new FileBrowser(root, stub);
        await browser.open("/");
        await browser.open("/forbidden");
        expect(browser.path).toBe("/");
        expect(rowNames(root)).toEqual(["docs"]);
        const text = root.querySelector(".banner-text")!.textContent!;
        expect(text).toContain("fault 403");
        expect(text).toContain("denied");
        await browser.open("/");
        expect(root.querySelector(".banner")).toBeNull();
    });

    test("clicking a file shows stat fields; md5 and download act on demand", async () => {
        const stub = withListing({ "/": [entry("readme.txt", "file", 3)] });
        stub.handlers["file.stat"] = () => [entry("readme.txt", "file", 3)];
        stub.handlers["file.md5"] = () => ["0bee89b07a248e27c83fc3d5951213c1"];
        stub.files["/readme.txt"] = new Uint8Array([97, 98, 99]);
        const root = host();
        const browser = new FileBrowser(root, stub);
        await browser.open("/");
        (root.querySelector("tbody tr") as HTMLElement).click();
        await browser.pending;
        expect(root.querySelector(".stat-name")!.textContent).toBe("readme.txt");
        expect(root.querySelector(".stat-size")!.textContent).toBe("3");
        expect(root.querySelector(".stat-mtime")!.textContent).toBe("1970-01-02T00:00:00Z");
        expect(stub.methodsCalled()).toEqual(["file.ls", "file.stat"]);

        const buttons = Array.from(root.querySelectorAll(".actions button"));
        (buttons[0] as HTMLButtonElement).click();
        await browser.pending;
        expect(root.querySelector(".md5")!.textContent).toBe(
            "0bee89b07a248e27c83fc3d5951213c1",
        );
        (buttons[1] as HTMLButtonElement).click();
        await browser.pending;
        expect(root.querySelector(".progress")!.textContent).toBe("3 bytes");
    });

    test("a failed download reports through the banner and returns null", async () => {
        const stub = withListing({ "/": [] });
        const root = host();
        const browser = new FileBrowser(root, stub);
        await browser.open("/");
        const got = await browser.download("/missing", "missing");
        expect(got).toBeNull();
        expect(root.querySelector(".banner-text")!.textContent).toContain("fault 404");
    });
});

describe("vo admin screen", () => {
    function groupStub(): StubSession {
        const stub = new StubSession();
        const users: { [group: string]: string[] } = {};
        const admins: { [group: string]: string[] } = {};
        stub.handlers["group.create"] = ([name]) => {
            users[name as string] = [];
            admins[name as string] = [stub.dn];
            return [true];
        };
        stub.handlers["group.delete"] = ([name]) => {
            delete users[name as string];
            delete admins[name as string];
            return [true];
        };
        stub.handlers["group.users"] = ([name]) => {
            const got = users[name as string];
            if (!got) throw new RpcFault(404, `no such group ${name}`);
            return got.slice();
        };
        stub.handlers["group.admins"] = ([name]) => admins[name as string]?.slice() ?? [];
        stub.handlers["group.add_users"] = ([name, dns]) => {
            users[name as string].push(...(dns as string[]));
            return [true];
        };
        stub.handlers["group.add_admins"] = ([name, dns]) => {
            admins[name as string].push(...(dns as string[]));
            return [true];
        };
        return stub;
    }

    function screen(stub: StubSession): { root: HTMLElement; vo: VoAdmin } {
        const root = host();
        return { root, vo: new VoAdmin(root, stub) };
    }

    function click(root: HTMLElement, selector: string): void {
        (root.querySelector(selector) as HTMLButtonElement).click();
    }

    test("create re-queries the group and renders both lists", async () => {
        const stub = groupStub();
        const { root, vo } = screen(stub);
        (root.querySelector(".group-name") as HTMLInputElement).value = "/labs";
        click(root, ".create-group");
        await vo.pending;
        expect(stub.methodsCalled()).toEqual(["group.create", "group.users", "group.admins"]);
        expect(root.querySelector(".current-group")!.textContent).toBe("/labs");
        expect(vo.users()).toEqual([]);
        expect(vo.admins()).toEqual([stub.dn]);
    });

    test("adding a member reloads and shows the new DN", async () => {
        const stub = groupStub();
        const { root, vo } = screen(stub);
        (root.querySelector(".group-name") as HTMLInputElement).value = "/labs";
        click(root, ".create-group");
        await vo.pending;
        (root.querySelector(".member-dn") as HTMLInputElement).value = "/CN=new member";
        click(root, ".add-user");
        await vo.pending;
        expect(vo.users()).toEqual(["/CN=new member"]);
        expect(stub.calls.at(-3)).toEqual(["group.add_users", ["/labs", ["/CN=new member"]]]);
    });

    test("a fault leaves the lists alone, shows a banner, re-enables the form", async () => {
        const stub = groupStub();
        const { root, vo } = screen(stub);
        (root.querySelector(".group-name") as HTMLInputElement).value = "/labs";
        click(root, ".create-group");
        await vo.pending;
        stub.handlers["group.create"] = () => {
            throw new RpcFault(403, "permission denied");
        };
        (root.querySelector(".group-name") as HTMLInputElement).value = "/nope";
        click(root, ".create-group");
        await vo.pending;
        expect(root.querySelector(".banner-text")!.textContent).toBe(
            "fault 403: permission denied",
        );
        expect(root.querySelector(".current-group")!.textContent).toBe("/labs");
        expect(vo.admins()).toEqual([stub.dn]);
        expect((root.querySelector("fieldset") as HTMLFieldSetElement).disabled).toBe(false);
    });

    test("the form is disabled while a mutation is in flight", async () => {
        const stub = groupStub();
        let release!: () => void;
        const gate = new Promise<void>((resolve) => (release = resolve));
        const inner = stub.handlers["group.create"];
        stub.handlers["group.create"] = async (params) => {
            await gate;
            return inner(params);
        };
        const { root, vo } = screen(stub);
        (root.querySelector(".group-name") as HTMLInputElement).value = "/labs";
        click(root, ".create-group");
        expect((root.querySelector("fieldset") as HTMLFieldSetElement).disabled).toBe(true);
        release();
        await vo.pending;
        expect((root.querySelector("fieldset") as HTMLFieldSetElement).disabled).toBe(false);
    });

    test("deleting the loaded group resets the screen", async () => {
        const stub = groupStub();
        const { root, vo } = screen(stub);
        (root.querySelector(".group-name") as HTMLInputElement).value = "/labs";
        click(root, ".create-group");
        await vo.pending;
        click(root, ".delete-group");
        await vo.pending;
        expect(root.querySelector(".current-group")!.textContent).toBe("no group loaded");
        expect(vo.users()).toEqual([]);
        expect(vo.admins()).toEqual([]);
    });
});

describe("echo screen", () => {
    test("round trips the default text and renders the raw result list", async () => {
        const stub = new StubSession();
        stub.handlers["echo.echo"] = ([text]) => [text];
        const root = host();
        const screen = new EchoScreen(root, stub);
        expect((root.querySelector(".echo-in") as HTMLInputElement).value).toBe("Hello");
        (root.querySelector("button") as HTMLButtonElement).click();
        await screen.pending;
        expect(root.querySelector(".echo-out")!.textContent).toBe('["Hello"]');
    });

    test("a fault becomes a banner", async () => {
        const stub = new StubSession();
        stub.handlers["echo.echo"] = () => {
            throw new RpcFault(500, "internal error");
        };
        const root = host();
        const screen = new EchoScreen(root, stub);
        (root.querySelector("button") as HTMLButtonElement).click();
        await screen.pending;
        expect(root.querySelector(".banner-text")!.textContent).toBe("fault 500: internal error");
    });
});

describe("login screen", () => {
    function connector(overrides: Partial<Connector> = {}): {
        connector: Connector;
        calls: string[];
    } {
        const calls: string[] = [];
        const fail = async (): Promise<UiSession> => {
            throw new RpcFault(403, "permission denied");
        };
        return {
            calls,
            connector: {
                fromEscrow: async (dn, password) => {
                    calls.push(`escrow:${dn}:${password}`);
                    return (overrides.fromEscrow ?? fail)(dn, password);
                },
                fromText: async (text) => {
                    calls.push(`text:${text.length}`);
                    return (overrides.fromText ?? fail)(text);
                },
            },
        };
    }

    test("escrow login passes trimmed DN, clears secrets, hands over the session", async () => {
        const fake = { dn: "/CN=op" } as UiSession;
        const { connector: conn, calls } = connector({ fromEscrow: async () => fake });
        const root = host();
        let got: UiSession | null = null;
        const screen = new LoginScreen(root, conn, (session) => (got = session));
        (root.querySelector(".dn") as HTMLInputElement).value = "  /CN=op  ";
        (root.querySelector(".password") as HTMLInputElement).value = "pw with space";
        (root.querySelector(".retrieve") as HTMLButtonElement).click();
        await screen.pending;
        expect(calls).toEqual(["escrow:/CN=op:pw with space"]);
        expect(got).toBe(fake);
        expect((root.querySelector(".password") as HTMLInputElement).value).toBe("");
    });

    test("a rejected login renders a banner and keeps the screen up", async () => {
        const { connector: conn } = connector();
        const root = host();
        const screen = new LoginScreen(root, conn, () => {
            throw new Error("must not log in");
        });
        (root.querySelector(".retrieve") as HTMLButtonElement).click();
        await screen.pending;
        expect(root.querySelector(".banner-text")!.textContent).toBe(
            "fault 403: permission denied",
        );
        expect(root.querySelector(".dn")).not.toBeNull();
    });

    test("pasted credentials go through fromText and the textarea is wiped", async () => {
        const fake = { dn: "/CN=op" } as UiSession;
        const { connector: conn, calls } = connector({ fromText: async () => fake });
        const root = host();
        const screen = new LoginScreen(root, conn, () => undefined);
        (root.querySelector(".paste") as HTMLTextAreaElement).value = "BEGIN...";
        (root.querySelector(".use-pasted") as HTMLButtonElement).click();
        await screen.pending;
        expect(calls).toEqual(["text:8"]);
        expect((root.querySelector(".paste") as HTMLTextAreaElement).value).toBe("");
    });
});

describe("deployment config", () => {
    test("key-value lines parse; comments, blanks and noise are skipped", () => {
        const text = [
            "# generated",
            "",
            "rpc_path = /rpc",
            "  spaced.key =  value = with equals  ",
            "no equals sign here",
        ].join("\n");
        expect(parseConfig(text)).toEqual({
            rpc_path: "/rpc",
            "spaced.key": "value = with equals",
        });
    });
});
