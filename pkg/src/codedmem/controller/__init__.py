"""Coded memory controller: core arbiter, bank queues, access scheduler,
code status table and recoding unit."""

from codedmem.bankarray import AccessPattern, Assignment
from codedmem.controller.queues import AccessRequest, BankQueues, Kind, arbiter_push
from codedmem.controller.recoder import RecodeRequest, Recoder
from codedmem.controller.scheduler import (
    Controller,
    ControllerConfig,
    build_read_pattern,
    build_write_pattern,
    recoder_fill,
    schedule_cycle,
)
from codedmem.status import CodeStatusTable, Status


def status_get(table, bank, row):
    return table.get(bank, row)


def status_set(table, bank, row, status, holder=None):
    table.set(bank, row, status, holder)
