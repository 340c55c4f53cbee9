#!/usr/bin/env python3
"""User-mode runner for static, freestanding Linux ELF binaries.

Usage: gg-emu.py <binary> [args...]

Loads the PT_LOAD segments of an aarch64, arm or riscv64 static executable
into a unicorn CPU, services the handful of Linux syscalls the desk runtime
needs (write, exit, exit_group) and mirrors the guest's fate onto this
process: the guest exit code becomes our exit code and faults are re-raised
as the matching signal (SIGSEGV for bad memory access, SIGILL for undecodable
instructions) so callers see the same termination a native run would produce.
"""

import os
import signal
import struct
import sys

try:
    import unicorn
    from unicorn import arm64_const, arm_const, riscv_const
except ImportError:  # pragma: no cover
    sys.stderr.write("gg-emu: python module 'unicorn' is not installed\n")
    sys.exit(127)

PAGE = 0x1000
STACK_TOP = 0x7FFF0000
STACK_SIZE = 8 << 20

EM_ARM = 40
EM_AARCH64 = 183
EM_RISCV = 243


def align_down(v):
    return v & ~(PAGE - 1)


def align_up(v):
    return (v + PAGE - 1) & ~(PAGE - 1)


class Guest:
    def __init__(self, machine):
        self.machine = machine
        if machine == EM_AARCH64:
            self.uc = unicorn.Uc(unicorn.UC_ARCH_ARM64, unicorn.UC_MODE_ARM)
            self.sp, self.pc = arm64_const.UC_ARM64_REG_SP, arm64_const.UC_ARM64_REG_PC
            self.nr = arm64_const.UC_ARM64_REG_X8
            self.args = [getattr(arm64_const, "UC_ARM64_REG_X%d" % i) for i in range(3)]
            self.sys_write, self.sys_exit = {64}, {93, 94}
        elif machine == EM_ARM:
            self.uc = unicorn.Uc(unicorn.UC_ARCH_ARM, unicorn.UC_MODE_ARM)
            self.sp, self.pc = arm_const.UC_ARM_REG_SP, arm_const.UC_ARM_REG_PC
            self.nr = arm_const.UC_ARM_REG_R7
            self.args = [getattr(arm_const, "UC_ARM_REG_R%d" % i) for i in range(3)]
            self.sys_write, self.sys_exit = {4}, {1, 248}
        elif machine == EM_RISCV:
            self.uc = unicorn.Uc(unicorn.UC_ARCH_RISCV, unicorn.UC_MODE_RISCV64)
            self.sp, self.pc = riscv_const.UC_RISCV_REG_SP, riscv_const.UC_RISCV_REG_PC
            self.nr = riscv_const.UC_RISCV_REG_A7
            self.args = [getattr(riscv_const, "UC_RISCV_REG_A%d" % i) for i in range(3)]
            self.sys_write, self.sys_exit = {64}, {93, 94}
        else:
            raise ValueError("unsupported ELF machine %d" % machine)
        self.exit_code = None

    def syscall(self):
        uc = self.uc
        nr = uc.reg_read(self.nr)
        a0, a1, a2 = (uc.reg_read(r) for r in self.args)
        if nr in self.sys_write:
            data = bytes(uc.mem_read(a1, a2))
            os.write(1 if a0 == 1 else 2, data)
            ret = a2
        elif nr in self.sys_exit:
            self.exit_code = a0 & 0xFF
            uc.emu_stop()
            return
        else:
            ret = -38  # ENOSYS
        uc.reg_write(self.args[0], ret & 0xFFFFFFFFFFFFFFFF)
        if self.machine == EM_RISCV:
            # ecall does not advance pc by itself under unicorn
            uc.reg_write(self.pc, uc.reg_read(self.pc) + 4)


def load(path):
    with open(path, "rb") as f:
        image = f.read()
    if image[:4] != b"\x7fELF":
        raise ValueError("not an ELF file")
    is64 = image[4] == 2
    if is64:
        (e_type, e_machine, _, e_entry, e_phoff, _, _, _, e_phentsize, e_phnum) = struct.unpack_from(
            "<HHIQQQIHHH", image, 16
        )
    else:
        (e_type, e_machine, _, e_entry, e_phoff, _, _, _, e_phentsize, e_phnum) = struct.unpack_from(
            "<HHIIIIIHHH", image, 16
        )
    if e_type != 2:
        raise ValueError("only static ET_EXEC binaries are supported")

    guest = Guest(e_machine)
    uc = guest.uc
    mapped = []
    for i in range(e_phnum):
        off = e_phoff + i * e_phentsize
        if is64:
            p_type, _, p_offset, p_vaddr, _, p_filesz, p_memsz, _ = struct.unpack_from("<IIQQQQQQ", image, off)
        else:
            p_type, p_offset, p_vaddr, _, p_filesz, p_memsz, _, _ = struct.unpack_from("<IIIIIIII", image, off)
        if p_type != 1 or p_memsz == 0:
            continue
        start, end = align_down(p_vaddr), align_up(p_vaddr + p_memsz)
        for lo, hi in mapped:
            if start < hi and end > lo:
                start = max(start, hi)
        if start < end:
            uc.mem_map(start, end - start, unicorn.UC_PROT_ALL)
            mapped.append((start, end))
        uc.mem_write(p_vaddr, image[p_offset : p_offset + p_filesz])

    uc.mem_map(STACK_TOP - STACK_SIZE, STACK_SIZE, unicorn.UC_PROT_READ | unicorn.UC_PROT_WRITE)
    # argc = 0, argv = NULL, envp = NULL, auxv = AT_NULL
    sp = STACK_TOP - 0x100
    uc.mem_write(sp, b"\x00" * 0x40)
    uc.reg_write(guest.sp, sp)
    return guest, e_entry


def main():
    if len(sys.argv) < 2:
        sys.stderr.write("usage: gg-emu.py <binary> [args...]\n")
        return 2
    try:
        guest, entry = load(sys.argv[1])
    except (OSError, ValueError) as err:
        sys.stderr.write("gg-emu: %s\n" % err)
        return 126

    uc = guest.uc
    uc.hook_add(unicorn.UC_HOOK_INTR, lambda *_: guest.syscall())
    try:
        uc.emu_start(entry, -1 & 0xFFFFFFFFFFFFFFFF)
    except unicorn.UcError as err:
        sys.stderr.write("gg-emu: guest fault at pc=%#x: %s\n" % (uc.reg_read(guest.pc), err))
        sys.stderr.flush()
        sig = signal.SIGILL if err.errno in (unicorn.UC_ERR_INSN_INVALID, unicorn.UC_ERR_EXCEPTION) else signal.SIGSEGV
        signal.signal(sig, signal.SIG_DFL)
        os.kill(os.getpid(), sig)
        return 128 + sig
    if guest.exit_code is None:
        sys.stderr.write("gg-emu: guest stopped without calling exit\n")
        signal.signal(signal.SIGSEGV, signal.SIG_DFL)
        os.kill(os.getpid(), signal.SIGSEGV)
    return guest.exit_code


if __name__ == "__main__":
    sys.exit(main())
